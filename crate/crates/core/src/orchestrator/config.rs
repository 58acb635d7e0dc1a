use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::autodiff::Adam;
use crate::gan::{DiscriminatorConfig, GeneratorConfig, LossConfig};
use crate::protocol::TransportKind;
use crate::toytask::{AffineMap, MultimodalSpec, TOY_CENTERS, TOY_VARIANCE};

const PRIOR_TOL: f64 = 1e-12;

/// Which training arrangement to run.
///
/// Written as `"asyndgan"`, `"syn-all"`, `"syn-subset-N"` or `"syn-plus-real-N"`,
/// with `N` a 1-based node index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Setting {
    /// One central generator, one discriminator per node and modality.
    #[default]
    AsynDgan,
    /// A single discriminator on the pooled data of every node.
    SynAll,
    /// A single discriminator on node `n`'s data only.
    SynSubset(usize),
    /// Distributed training; evaluation pools synthetic samples with node `n`'s real data.
    SynPlusReal(usize),
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::AsynDgan => f.write_str("asyndgan"),
            Setting::SynAll => f.write_str("syn-all"),
            Setting::SynSubset(n) => write!(f, "syn-subset-{n}"),
            Setting::SynPlusReal(n) => write!(f, "syn-plus-real-{n}"),
        }
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let indexed = |rest: &str| {
            rest.parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| format!("bad node index in setting {s:?}"))
        };
        match s {
            "asyndgan" => Ok(Setting::AsynDgan),
            "syn-all" => Ok(Setting::SynAll),
            _ => {
                if let Some(rest) = s.strip_prefix("syn-subset-") {
                    indexed(rest).map(Setting::SynSubset)
                } else if let Some(rest) = s.strip_prefix("syn-plus-real-") {
                    indexed(rest).map(Setting::SynPlusReal)
                } else {
                    Err(format!(
                        "unknown setting {s:?} (expected asyndgan, syn-all, syn-subset-N, syn-plus-real-N)"
                    ))
                }
            }
        }
    }
}

impl TryFrom<String> for Setting {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Setting> for String {
    fn from(s: Setting) -> String {
        s.to_string()
    }
}

/// Where the generator's input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConditionSource {
    /// Fresh `N(0, variance·I)` noise, unrelated to the real sample.
    Noise { variance: f64 },
    /// `scale ×` the base point behind the real sample, so `x` and `y` are paired.
    Paired { scale: f64 },
}

impl Default for ConditionSource {
    fn default() -> Self {
        ConditionSource::Noise {
            variance: TOY_VARIANCE,
        }
    }
}

/// One data node. Its points are split round-robin across `centers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub centers: Vec<[f64; 2]>,
    #[serde(default = "default_variance")]
    pub variance: [f64; 2],
    #[serde(default = "default_count")]
    pub count: usize,
    /// Available modalities (1-based). Defaults to all of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modalities: Option<Vec<usize>>,
}

fn default_variance() -> [f64; 2] {
    [TOY_VARIANCE; 2]
}

fn default_count() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub samples: usize,
    pub radius: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples: 4000,
            radius: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub setting: Setting,
    pub seed: u64,
    /// Generator updates `T`.
    pub rounds: u64,
    /// Minibatch size `m`.
    pub batch_size: usize,
    /// Discriminator steps per round.
    pub disc_steps: usize,
    /// Modality count `c`.
    pub modalities: usize,
    pub condition: ConditionSource,
    pub nodes: Vec<NodeConfig>,
    /// Node weights; defaults to dataset size over total size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priors: Option<Vec<f64>>,
    /// Per-modality affine maps; identity when `modalities = 1`, else the
    /// three-map default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multimodal: Option<MultimodalSpec>,
    pub loss: LossConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub adam: Adam,
    /// A metrics row is kept every `log_every` rounds and at the last round.
    pub log_every: u64,
    pub eval: EvalConfig,
    pub transport: TransportKind,
    pub feedback_timeout_ms: u64,
    /// Parameter count of the model used for the parameter-sharing comparison.
    pub baseline_parameters: u64,
}

impl Default for ExperimentConfig {
    /// The four-node Gaussian toy.
    fn default() -> Self {
        Self {
            name: "toy-asyndgan".into(),
            setting: Setting::AsynDgan,
            seed: 0,
            rounds: 5000,
            batch_size: 10,
            disc_steps: 1,
            modalities: 1,
            condition: ConditionSource::default(),
            nodes: TOY_CENTERS
                .iter()
                .map(|&c| NodeConfig {
                    centers: vec![c],
                    variance: default_variance(),
                    count: default_count(),
                    modalities: None,
                })
                .collect(),
            priors: None,
            multimodal: None,
            loss: LossConfig {
                l1_weight: 0.0,
                ..LossConfig::default()
            },
            generator: GeneratorConfig {
                hidden: vec![64, 64, 64],
                dropout: 0.0,
                input_scale: 40.0,
                output_scale: 10.0,
                output_init_scale: 0.1,
            },
            discriminator: DiscriminatorConfig {
                conditioned: false,
                input_scale: 0.1,
                ..DiscriminatorConfig::default()
            },
            adam: Adam::default(),
            log_every: 100,
            eval: EvalConfig::default(),
            transport: TransportKind::Inproc,
            feedback_timeout_ms: 60_000,
            baseline_parameters: 42_500_000,
        }
    }
}

impl ExperimentConfig {
    /// Three paired nodes, each missing one of three modalities.
    pub fn missing_modality() -> Self {
        let all: Vec<[f64; 2]> = TOY_CENTERS.to_vec();
        Self {
            name: "toy-missing-modality".into(),
            modalities: 3,
            condition: ConditionSource::Paired { scale: 0.1 },
            nodes: [vec![2, 3], vec![1, 3], vec![1, 2]]
                .into_iter()
                .map(|m| NodeConfig {
                    centers: all.clone(),
                    variance: default_variance(),
                    count: default_count(),
                    modalities: Some(m),
                })
                .collect(),
            loss: LossConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            generator: GeneratorConfig {
                dropout: 0.0,
                input_scale: 1.0,
                output_scale: 10.0,
                ..GeneratorConfig::default()
            },
            multimodal: Some(MultimodalSpec::default()),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, OrchestratorError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| OrchestratorError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Modality set of configured node `j` (0-based).
    pub fn node_modalities(&self, j: usize) -> Vec<usize> {
        self.nodes[j]
            .modalities
            .clone()
            .unwrap_or_else(|| (1..=self.modalities).collect())
    }

    pub fn multimodal_spec(&self) -> MultimodalSpec {
        match &self.multimodal {
            Some(s) => s.clone(),
            None if self.modalities == 1 => MultimodalSpec {
                maps: vec![AffineMap::IDENTITY],
            },
            None => MultimodalSpec::default(),
        }
    }

    /// Every distinct mixture center across nodes, in first-seen order.
    pub fn all_centers(&self) -> Vec<[f64; 2]> {
        let mut out: Vec<[f64; 2]> = Vec::new();
        for n in &self.nodes {
            for c in &n.centers {
                if !out.contains(c) {
                    out.push(*c);
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |field: &str, msg: String| Err(OrchestratorError::invalid(field, msg));
        if self.nodes.is_empty() {
            return bad("nodes", "at least one node is required".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1".into());
        }
        if self.disc_steps == 0 {
            return bad("disc_steps", "must be >= 1".into());
        }
        if self.log_every == 0 {
            return bad("log_every", "must be >= 1".into());
        }
        if self.modalities == 0 || self.modalities > u8::MAX as usize {
            return bad("modalities", format!("must be in 1..=255, got {}", self.modalities));
        }
        let spec = self.multimodal_spec();
        if spec.modalities() != self.modalities {
            return bad(
                "multimodal",
                format!(
                    "{} maps for {} modalities",
                    spec.modalities(),
                    self.modalities
                ),
            );
        }
        if let Err(e) = spec.validate() {
            return bad("multimodal", e.to_string());
        }
        match self.condition {
            ConditionSource::Noise { variance } if !(variance > 0.0 && variance.is_finite()) => {
                return bad("condition.variance", format!("must be > 0, got {variance}"));
            }
            ConditionSource::Paired { scale } if !scale.is_finite() => {
                return bad("condition.scale", format!("must be finite, got {scale}"));
            }
            _ => {}
        }
        let mut covered = vec![false; self.modalities];
        for (j, n) in self.nodes.iter().enumerate() {
            let field = |f: &str| format!("nodes[{j}].{f}");
            if n.centers.is_empty() {
                return bad(&field("centers"), "at least one center is required".into());
            }
            if n.count < self.batch_size.max(1) {
                return bad(
                    &field("count"),
                    format!("{} points cannot fill a batch of {}", n.count, self.batch_size),
                );
            }
            if !n.variance.iter().all(|&v| v > 0.0 && v.is_finite()) {
                return bad(&field("variance"), format!("entries must be > 0, got {:?}", n.variance));
            }
            let mods = self.node_modalities(j);
            if mods.is_empty() {
                return bad(&field("modalities"), "must not be empty".into());
            }
            for (i, &k) in mods.iter().enumerate() {
                if k == 0 || k > self.modalities {
                    return bad(
                        &field("modalities"),
                        format!("modality {k} outside 1..={}", self.modalities),
                    );
                }
                if mods[..i].contains(&k) {
                    return bad(&field("modalities"), format!("modality {k} listed twice"));
                }
                covered[k - 1] = true;
            }
        }
        if let Some(k) = covered.iter().position(|c| !c) {
            return bad(
                "nodes",
                format!("modality {} is not available at any node", k + 1),
            );
        }
        if let Some(p) = &self.priors {
            if p.len() != self.nodes.len() {
                return bad(
                    "priors",
                    format!("{} priors for {} nodes", p.len(), self.nodes.len()),
                );
            }
            if p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return bad("priors", "entries must be finite and >= 0".into());
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > PRIOR_TOL {
                return bad("priors", format!("must sum to 1, got {sum}"));
            }
        }
        match self.setting {
            Setting::SynSubset(n) | Setting::SynPlusReal(n) if n > self.nodes.len() => {
                return bad(
                    "setting",
                    format!("node {n} does not exist ({} nodes)", self.nodes.len()),
                );
            }
            Setting::SynAll if self.shared_modalities().is_empty() => {
                return bad("setting", "syn-all needs a modality every node has".into());
            }
            _ => {}
        }
        if let Err(e) = self.loss.validate() {
            return bad("loss", e.to_string());
        }
        if !(0.0..1.0).contains(&self.generator.dropout) {
            return bad(
                "generator.dropout",
                format!("must be in [0, 1), got {}", self.generator.dropout),
            );
        }
        if !(self.eval.radius > 0.0) {
            return bad("eval.radius", format!("must be > 0, got {}", self.eval.radius));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0)
        {
            return bad("adam", format!("invalid hyperparameters {a:?}"));
        }
        Ok(())
    }

    /// Modalities available at every node.
    pub fn shared_modalities(&self) -> Vec<usize> {
        (1..=self.modalities)
            .filter(|k| (0..self.nodes.len()).all(|j| self.node_modalities(j).contains(k)))
            .collect()
    }
}
