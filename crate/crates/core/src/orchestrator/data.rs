use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{ExperimentConfig, Setting};
use crate::autodiff::Tensor;
use crate::toytask::make_multimodal;

/// Streams drawn from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedTag {
    Data = 1,
    Node = 2,
    GeneratorInit = 3,
    DiscriminatorInit = 4,
    Dropout = 5,
    Eval = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes `(master, tag, parts...)` into an independent 64-bit seed.
pub fn derive_seed(master: u64, tag: SeedTag, parts: &[u64]) -> u64 {
    let mut s = splitmix64(master ^ splitmix64(tag as u64));
    for &p in parts {
        s = splitmix64(s ^ p);
    }
    s
}

/// One training participant after the setting is applied. `sources` are the
/// configured nodes whose data it holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub id: u32,
    pub sources: Vec<usize>,
    pub modalities: Vec<usize>,
    pub prior: f64,
    pub count: usize,
}

pub fn participants(cfg: &ExperimentConfig) -> Vec<Participant> {
    let single = |sources: Vec<usize>, modalities: Vec<usize>| {
        let count = sources.iter().map(|&j| cfg.nodes[j].count).sum();
        vec![Participant {
            id: 0,
            sources,
            modalities,
            prior: 1.0,
            count,
        }]
    };
    match cfg.setting {
        Setting::SynAll => single((0..cfg.nodes.len()).collect(), cfg.shared_modalities()),
        Setting::SynSubset(n) => single(vec![n - 1], cfg.node_modalities(n - 1)),
        Setting::AsynDgan | Setting::SynPlusReal(_) => {
            let total: usize = cfg.nodes.iter().map(|n| n.count).sum();
            (0..cfg.nodes.len())
                .map(|j| Participant {
                    id: j as u32,
                    sources: vec![j],
                    modalities: cfg.node_modalities(j),
                    prior: match &cfg.priors {
                        Some(p) => p[j],
                        None => cfg.nodes[j].count as f64 / total as f64,
                    },
                    count: cfg.nodes[j].count,
                })
                .collect()
        }
    }
}

/// Base points of configured node `j`, assigned round-robin to its centers.
pub fn node_base(cfg: &ExperimentConfig, j: usize) -> Tensor {
    let node = &cfg.nodes[j];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SeedTag::Data, &[j as u64]));
    let sd = [node.variance[0].sqrt(), node.variance[1].sqrt()];
    let mut data = Vec::with_capacity(node.count * 2);
    for i in 0..node.count {
        let c = node.centers[i % node.centers.len()];
        for axis in 0..2 {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(c[axis] + sd[axis] * z);
        }
    }
    Tensor::new(vec![node.count, 2], data).expect("shape")
}

/// What a participant holds locally: base points (used for paired conditions)
/// and only the real channels it has.
#[derive(Debug, Clone)]
pub struct LocalData {
    pub base: Tensor,
    /// Aligned with the participant's modality list.
    pub channels: Vec<Tensor>,
}

impl LocalData {
    pub fn for_participant(cfg: &ExperimentConfig, p: &Participant) -> Self {
        let base = Tensor::vcat(
            &p.sources
                .iter()
                .map(|&j| node_base(cfg, j))
                .collect::<Vec<_>>(),
        );
        let all = make_multimodal(&base, &cfg.multimodal_spec());
        let channels = p.modalities.iter().map(|&k| all[k - 1].clone()).collect();
        Self { base, channels }
    }

    pub fn len(&self) -> usize {
        self.base.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.base.rows() == 0
    }

    pub fn sample_indices(&self, rng: &mut impl Rng, m: usize) -> Vec<usize> {
        (0..m).map(|_| rng.random_range(0..self.len())).collect()
    }
}
