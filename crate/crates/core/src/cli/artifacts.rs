use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::svg::scatter;
use super::CliError;
use crate::metrics::TheoryReport;
use crate::orchestrator::{Evaluation, ExperimentConfig, TrainingOutcome};
use crate::protocol::{ledger_report, BandwidthReport};

/// Bumped whenever a column or field of the emitted files changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

pub const METRICS_CSV: &str = "metrics.csv";
pub const REPORT_JSON: &str = "report.json";
pub const SCATTER_SVG: &str = "scatter.svg";
pub const LEDGER_CSV: &str = "ledger.csv";
pub const CHECKPOINT: &str = "generator.adgw";
pub const RESOLVED_CONFIG: &str = "config.toml";
pub const MANIFEST_JSON: &str = "manifest.json";

/// SHA-256 of the resolved config in TOML form.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub config_hash: Option<String>,
    pub status: &'static str,
    pub error: Option<String>,
    pub artifacts: Vec<String>,
    /// Artifacts written before a failure; they may be incomplete.
    pub partial_artifacts: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ParticipantRow {
    id: u32,
    sources: Vec<usize>,
    modalities: Vec<usize>,
    prior: f64,
    count: usize,
}

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub setting: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<&'a ExperimentConfig>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    participants: Vec<ParticipantRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<&'a Evaluation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<BandwidthReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory: Option<&'a TheoryReport>,
}

impl<'a> Report<'a> {
    pub fn new(outcome: Option<&'a TrainingOutcome>, theory: Option<&'a TheoryReport>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: outcome.map(|o| o.config.name.as_str()),
            setting: outcome.map(|o| o.config.setting.to_string()),
            config_hash: outcome.map(|o| config_hash(&o.config)),
            config: outcome.map(|o| &o.config),
            participants: outcome
                .map(|o| {
                    o.participants
                        .iter()
                        .map(|p| ParticipantRow {
                            id: p.id,
                            sources: p.sources.clone(),
                            modalities: p.modalities.clone(),
                            prior: p.prior,
                            count: p.count,
                        })
                        .collect()
                })
                .unwrap_or_default(),
            evaluation: outcome.map(|o| &o.evaluation),
            bandwidth: outcome.map(|o| ledger_report(&o.ledger, o.config.baseline_parameters)),
            theory,
        }
    }
}

/// `round,disc_loss_node<id>...,gen_adv,gen_l1,bytes`, one row per logged round.
pub fn metrics_csv(outcome: &TrainingOutcome) -> String {
    let mut s = String::from("round");
    for p in &outcome.participants {
        let _ = write!(s, ",disc_loss_node{}", p.id);
    }
    s.push_str(",gen_adv,gen_l1,bytes\n");
    for row in &outcome.history {
        let _ = write!(s, "{}", row.round);
        for v in &row.disc_loss {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{},{},{}", row.gen_adv, row.gen_l1, row.bytes);
    }
    s
}

pub fn ledger_csv(outcome: &TrainingOutcome) -> String {
    let report = ledger_report(&outcome.ledger, outcome.config.baseline_parameters);
    let mut s =
        String::from("node,direction,variant,messages,payload_bytes,framed_bytes,overhead_bytes\n");
    for l in &report.links {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            l.node,
            l.direction.name(),
            l.variant.name(),
            l.traffic.messages,
            l.traffic.payload_bytes,
            l.traffic.framed_bytes,
            l.overhead_bytes
        );
    }
    s
}

pub fn scatter_svg(outcome: &TrainingOutcome) -> String {
    let e = &outcome.evaluation;
    scatter(
        &format!("{} ({})", outcome.config.name, outcome.config.setting),
        &[
            ("real", "#1f77b4", &e.real),
            ("condition", "#7f7f7f", &e.conditions),
            ("generated", "#d62728", &e.generated),
        ],
    )
}

/// Writes files into `dir`, tracking which ones exist.
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}
