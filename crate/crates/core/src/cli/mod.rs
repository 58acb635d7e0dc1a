//! Command-line front end: `run` trains one configuration and writes its
//! artifacts, `compare` tabulates finished runs.

mod artifacts;
mod svg;

pub use artifacts::{
    config_hash, ledger_csv, metrics_csv, scatter_svg, RunManifest, CHECKPOINT, LEDGER_CSV,
    MANIFEST_JSON, METRICS_CSV, REPORT_JSON, RESOLVED_CONFIG, SCATTER_SVG, SCHEMA_VERSION,
};
pub use svg::scatter;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use artifacts::{ArtifactWriter, Report};
use crate::metrics::theory_check;
use crate::orchestrator::{run_training, ExperimentConfig, OrchestratorError, TrainingOutcome};
use crate::protocol::TransportKind;

/// Seed and trial count of the `--check-theory` block.
const THEORY_SEED: u64 = 0;
const THEORY_TRIALS: usize = 50;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Run(#[from] OrchestratorError),
    #[error("{0}: no report.json (not a finished run?)")]
    MissingReport(PathBuf),
    #[error("{path}: malformed report: {message}")]
    BadReport { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "asyndgan", version, about = "Distributed GAN simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration and write its artifacts.
    Run {
        /// TOML experiment config. May be omitted with --check-theory.
        config: Option<PathBuf>,
        /// Output directory [default: runs/<name>].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        transport: Option<TransportKind>,
        /// Add the numerical optimality checks to report.json.
        #[arg(long)]
        check_theory: bool,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tabulate coverage and bandwidth of finished runs as CSV.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(ExperimentConfig::from_toml(&text)?)
}

/// Executes `run`, returning the output directory.
pub fn run(
    config: Option<&Path>,
    out: Option<&Path>,
    transport: Option<TransportKind>,
    check_theory: bool,
    seed: Option<u64>,
) -> Result<PathBuf, CliError> {
    let cfg = match config {
        Some(p) => {
            let mut cfg = load_config(p)?;
            if let Some(t) = transport {
                cfg.transport = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            Some(cfg)
        }
        None if check_theory => None,
        None => return Err(CliError::Usage("a config file is required unless --check-theory is given".into())),
    };
    let dir = match (out, &cfg) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(c)) => PathBuf::from("runs").join(&c.name),
        (None, None) => PathBuf::from("runs").join("theory"),
    };
    let mut writer = ArtifactWriter::new(&dir)?;
    let theory = check_theory.then(|| theory_check(THEORY_SEED, THEORY_TRIALS));
    let result = (|| -> Result<(), CliError> {
        let outcome = match &cfg {
            Some(c) => {
                writer.write(RESOLVED_CONFIG, c.to_toml().as_bytes())?;
                Some(run_training(c)?)
            }
            None => None,
        };
        if let Some(o) = &outcome {
            write_training_artifacts(&mut writer, o)?;
        }
        let report = Report::new(outcome.as_ref(), theory.as_ref());
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        writer.write(REPORT_JSON, json.as_bytes())
    })();
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        config_path: config.map(Path::to_path_buf),
        output_dir: dir.clone(),
        config_hash: cfg.as_ref().map(config_hash),
        status: if result.is_ok() { "complete" } else { "failed" },
        error: result.as_ref().err().map(ToString::to_string),
        artifacts: if result.is_ok() { writer.written().to_vec() } else { Vec::new() },
        partial_artifacts: if result.is_ok() { Vec::new() } else { writer.written().to_vec() },
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = writer.path(MANIFEST_JSON);
    fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    result.map(|()| dir)
}

fn write_training_artifacts(w: &mut ArtifactWriter, o: &TrainingOutcome) -> Result<(), CliError> {
    w.write(METRICS_CSV, metrics_csv(o).as_bytes())?;
    w.write(LEDGER_CSV, ledger_csv(o).as_bytes())?;
    w.write(SCATTER_SVG, scatter_svg(o).as_bytes())?;
    let mut buf = Vec::new();
    o.generator
        .params
        .save(&mut buf)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    w.write(CHECKPOINT, &buf)
}

/// One CSV row per run directory:
/// `run,setting,mode_1..mode_K,outliers,total_framed_bytes`.
pub fn compare(dirs: &[PathBuf]) -> Result<String, CliError> {
    if dirs.is_empty() {
        return Err(CliError::Usage("compare needs at least one run directory".into()));
    }
    let mut rows = Vec::new();
    let mut modes = 0;
    for d in dirs {
        let path = d.join(REPORT_JSON);
        let text = fs::read_to_string(&path).map_err(|_| CliError::MissingReport(d.clone()))?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::BadReport {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let bad = |m: &str| CliError::BadReport {
            path: path.clone(),
            message: m.to_string(),
        };
        let cov = &v["evaluation"]["coverage"];
        let per_mode: Vec<f64> = cov["per_mode"]
            .as_array()
            .ok_or_else(|| bad("missing evaluation.coverage.per_mode"))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| bad("non-numeric coverage")))
            .collect::<Result<_, _>>()?;
        let outliers = cov["outliers"].as_f64().ok_or_else(|| bad("missing outliers"))?;
        let setting = v["setting"].as_str().ok_or_else(|| bad("missing setting"))?.to_string();
        let bytes = v["bandwidth"]["total"]["framed_bytes"]
            .as_u64()
            .ok_or_else(|| bad("missing bandwidth total"))?;
        modes = modes.max(per_mode.len());
        rows.push((d.display().to_string(), setting, per_mode, outliers, bytes));
    }
    let mut s = String::from("run,setting");
    for k in 1..=modes {
        let _ = write!(s, ",mode_{k}");
    }
    s.push_str(",outliers,total_framed_bytes\n");
    for (run, setting, per_mode, outliers, bytes) in rows {
        let _ = write!(s, "{run},{setting}");
        for k in 0..modes {
            match per_mode.get(k) {
                Some(v) => {
                    let _ = write!(s, ",{v}");
                }
                None => s.push(','),
            }
        }
        let _ = writeln!(s, ",{outliers},{bytes}");
    }
    Ok(s)
}

/// Entry point of the `asyndgan` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ASYNDGAN_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            transport,
            check_theory,
            seed,
        } => run(config.as_deref(), out.as_deref(), transport, check_theory, seed).map(|dir| {
            println!("{}", dir.display());
        }),
        Command::Compare { dirs, out } => compare(&dirs).and_then(|table| match out {
            Some(p) => fs::write(&p, table).map_err(|e| CliError::io(&p, e)),
            None => {
                print!("{table}");
                Ok(())
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
