use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::config::{ConditionSource, ExperimentConfig, Setting};
use super::data::{derive_seed, node_base, SeedTag};
use super::OrchestratorError;
use crate::autodiff::Tensor;
use crate::gan::{GanError, GeneratorModel};
use crate::metrics::{mode_coverage, Coverage};
use crate::toytask::sample_noise;

/// Channel `s` (1-based) of `G(x)`, used in place of a modality a node lacks.
pub fn complete_modality(
    g: &GeneratorModel,
    condition: &Tensor,
    s: usize,
    seed: u64,
) -> Result<Tensor, GanError> {
    if s == 0 || s > g.modalities() {
        return Err(GanError::Modality(s, g.modalities()));
    }
    let out = g.sample(condition, seed)?.output;
    g.channel(&out, s)
}

/// Completion error of one synthesized modality against its known transform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelError {
    pub modality: usize,
    /// `sqrt(mean ‖G_s(x) - (A_s·p + b_s)‖²)`.
    pub rmse: f64,
    /// Nodes that lack this modality and would use the synthetic channel.
    pub missing_at: Vec<u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    /// Coverage of the evaluated point set: synthetic samples, pooled with the
    /// chosen node's real data under `syn-plus-real-N`.
    pub coverage: Coverage,
    /// Coverage of the synthetic samples alone.
    pub synthetic_coverage: Coverage,
    /// Filled for paired conditions, one entry per modality.
    pub completion: Vec<ChannelError>,
    #[serde(skip)]
    pub conditions: Tensor,
    /// First generated channel for every evaluation condition.
    #[serde(skip)]
    pub generated: Tensor,
    /// First real channel of every configured node.
    #[serde(skip)]
    pub real: Tensor,
}

/// Fresh base points from the union of node mixtures, cycling through nodes
/// and then through each node's centers.
fn fresh_base(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let k = cfg.nodes.len();
    let mut data = Vec::with_capacity(2 * n);
    for i in 0..n {
        let node = &cfg.nodes[i % k];
        let c = node.centers[(i / k) % node.centers.len()];
        for axis in 0..2 {
            let z: f64 = StandardNormal.sample(rng);
            data.push(c[axis] + node.variance[axis].sqrt() * z);
        }
    }
    Tensor::new(vec![n, 2], data).expect("shape")
}

pub fn evaluate(cfg: &ExperimentConfig, g: &GeneratorModel) -> Result<Evaluation, OrchestratorError> {
    let n = cfg.eval.samples;
    let spec = cfg.multimodal_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SeedTag::Eval, &[0]));
    let dropout_seed = derive_seed(cfg.seed, SeedTag::Eval, &[1]);
    let (conditions, base) = match cfg.condition {
        ConditionSource::Noise { variance } => (sample_noise(&mut rng, n, variance), None),
        ConditionSource::Paired { scale } => {
            let base = fresh_base(cfg, &mut rng, n);
            (base.scale(scale), Some(base))
        }
    };
    let output = g.sample(&conditions, dropout_seed)?.output;
    let generated = g.channel(&output, 1)?;

    let centers: Vec<[f64; 2]> = cfg
        .all_centers()
        .iter()
        .map(|&c| spec.maps[0].apply(c))
        .collect();
    let real_nodes: Vec<Tensor> = (0..cfg.nodes.len())
        .map(|j| spec.maps[0].apply_batch(&node_base(cfg, j)))
        .collect();
    let synthetic_coverage = mode_coverage(&generated, &centers, cfg.eval.radius)?;
    let coverage = match cfg.setting {
        Setting::SynPlusReal(k) => mode_coverage(
            &Tensor::vcat(&[generated.clone(), real_nodes[k - 1].clone()]),
            &centers,
            cfg.eval.radius,
        )?,
        _ => synthetic_coverage.clone(),
    };

    let mut completion = Vec::new();
    if let Some(base) = base {
        for s in 1..=cfg.modalities {
            let synth = g.channel(&output, s)?;
            let truth = spec.channel(&base, s)?;
            let sq: f64 = synth
                .data()
                .iter()
                .zip(truth.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            completion.push(ChannelError {
                modality: s,
                rmse: (sq / n.max(1) as f64).sqrt(),
                missing_at: (0..cfg.nodes.len())
                    .filter(|&j| !cfg.node_modalities(j).contains(&s))
                    .map(|j| j as u32)
                    .collect(),
            });
        }
    }
    Ok(Evaluation {
        coverage,
        synthetic_coverage,
        completion,
        conditions,
        generated,
        real: Tensor::vcat(&real_nodes),
    })
}
