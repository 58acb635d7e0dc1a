//! Synthetic point data: the four-Gaussian mixture, its noise conditions, and a
//! multimodal construction where every modality is a fixed affine image of a
//! shared base point.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("covariance entries must be > 0, got {0:?}")]
    Covariance([f64; 2]),
    #[error("affine map {0} is not invertible")]
    Singular(usize),
    #[error("modality {0} out of range 1..={1}")]
    Modality(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mode centers of the toy mixture.
pub const TOY_CENTERS: [[f64; 2]; 4] = [[10.0, 10.0], [10.0, -10.0], [-10.0, 10.0], [-10.0, -10.0]];
/// Per-axis variance of every mode and of the condition noise.
pub const TOY_VARIANCE: f64 = 0.5;

/// An axis-aligned Gaussian blob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSubset {
    pub center: [f64; 2],
    /// Diagonal of the covariance matrix.
    pub variance: [f64; 2],
    pub count: usize,
}

impl GaussianSubset {
    pub fn new(center: [f64; 2], variance: [f64; 2], count: usize) -> Self {
        Self {
            center,
            variance,
            count,
        }
    }

    pub fn validate(&self) -> Result<(), ToyError> {
        if self.variance.iter().all(|&v| v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(ToyError::Covariance(self.variance))
        }
    }
}

/// The four toy subsets, `count` points each.
pub fn toy_subsets(count: usize) -> Vec<GaussianSubset> {
    TOY_CENTERS
        .iter()
        .map(|&c| GaussianSubset::new(c, [TOY_VARIANCE; 2], count))
        .collect()
}

/// `spec.count` i.i.d. draws from `N(center, diag(variance))`, as a `[count, 2]` matrix.
pub fn sample_subset(spec: &GaussianSubset, rng: &mut impl Rng) -> Result<Tensor, ToyError> {
    spec.validate()?;
    let sd = [spec.variance[0].sqrt(), spec.variance[1].sqrt()];
    let mut data = Vec::with_capacity(spec.count * 2);
    for _ in 0..spec.count {
        for axis in 0..2 {
            let z: f64 = StandardNormal.sample(rng);
            data.push(spec.center[axis] + sd[axis] * z);
        }
    }
    Ok(Tensor::new(vec![spec.count, 2], data).expect("shape"))
}

/// `m` draws of the generator's toy input, `N(0, diag(0.5, 0.5))`.
pub fn sample_condition(rng: &mut impl Rng, m: usize) -> Tensor {
    sample_noise(rng, m, TOY_VARIANCE)
}

/// `m` draws from `N(0, variance·I)` in two dimensions.
pub fn sample_noise(rng: &mut impl Rng, m: usize, variance: f64) -> Tensor {
    let normal = Normal::new(0.0, variance.sqrt()).expect("valid sd");
    let data = (0..2 * m).map(|_| normal.sample(rng)).collect();
    Tensor::new(vec![m, 2], data).expect("shape")
}

/// `p ↦ A·p + b` on 2-vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineMap {
    /// Row-major 2×2 matrix.
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        a: [[1.0, 0.0], [0.0, 1.0]],
        b: [0.0, 0.0],
    };

    pub fn scaled(k: f64, b: [f64; 2]) -> Self {
        Self {
            a: [[k, 0.0], [0.0, k]],
            b,
        }
    }

    pub fn rotation(degrees: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        Self {
            a: [[c, -s], [s, c]],
            b: [0.0, 0.0],
        }
    }

    pub fn det(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.a[0][0] * p[0] + self.a[0][1] * p[1] + self.b[0],
            self.a[1][0] * p[0] + self.a[1][1] * p[1] + self.b[1],
        ]
    }

    /// Inverse map; `None` when `A` is singular.
    pub fn inverse(&self) -> Option<AffineMap> {
        let det = self.det();
        if det.abs() < 1e-12 || !det.is_finite() {
            return None;
        }
        let inv = [
            [self.a[1][1] / det, -self.a[0][1] / det],
            [-self.a[1][0] / det, self.a[0][0] / det],
        ];
        let b = [
            -(inv[0][0] * self.b[0] + inv[0][1] * self.b[1]),
            -(inv[1][0] * self.b[0] + inv[1][1] * self.b[1]),
        ];
        Some(AffineMap { a: inv, b })
    }

    pub fn apply_batch(&self, points: &Tensor) -> Tensor {
        let rows: Vec<[f64; 2]> = (0..points.rows())
            .map(|i| {
                let r = points.row(i);
                self.apply([r[0], r[1]])
            })
            .collect();
        if rows.is_empty() {
            return Tensor::zeros(&[0, 2]);
        }
        Tensor::from_rows(&rows)
    }
}

/// Per-modality affine images of a base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultimodalSpec {
    pub maps: Vec<AffineMap>,
}

impl Default for MultimodalSpec {
    /// `c = 3`: identity, `2I + (1, 1)`, and a 45° rotation.
    fn default() -> Self {
        Self {
            maps: vec![
                AffineMap::IDENTITY,
                AffineMap::scaled(2.0, [1.0, 1.0]),
                AffineMap::rotation(45.0),
            ],
        }
    }
}

impl MultimodalSpec {
    pub fn modalities(&self) -> usize {
        self.maps.len()
    }

    pub fn validate(&self) -> Result<(), ToyError> {
        for (k, m) in self.maps.iter().enumerate() {
            if m.inverse().is_none() {
                return Err(ToyError::Singular(k + 1));
            }
        }
        Ok(())
    }

    /// Ground-truth channel `k` (1-based) for a base batch.
    pub fn channel(&self, base: &Tensor, k: usize) -> Result<Tensor, ToyError> {
        let map = self
            .maps
            .get(k.wrapping_sub(1))
            .ok_or(ToyError::Modality(k, self.maps.len()))?;
        Ok(map.apply_batch(base))
    }

    /// Recovers the base batch from channel `k`.
    pub fn invert(&self, channel: &Tensor, k: usize) -> Result<Tensor, ToyError> {
        let map = self
            .maps
            .get(k.wrapping_sub(1))
            .ok_or(ToyError::Modality(k, self.maps.len()))?;
        let inv = map.inverse().ok_or(ToyError::Singular(k))?;
        Ok(inv.apply_batch(channel))
    }
}

/// Channel `k = A_k·p + b_k` for every base point `p`, for all `c` modalities.
pub fn make_multimodal(base: &Tensor, spec: &MultimodalSpec) -> Vec<Tensor> {
    spec.maps.iter().map(|m| m.apply_batch(base)).collect()
}

/// Writes `channel,x,y` rows for each channel of a multi-channel point batch.
pub fn write_csv<W: Write>(mut w: W, channels: &[Tensor]) -> Result<(), ToyError> {
    writeln!(w, "channel,x,y")?;
    for (k, ch) in channels.iter().enumerate() {
        for i in 0..ch.rows() {
            let r = ch.row(i);
            writeln!(w, "{},{},{}", k + 1, r[0], r[1])?;
        }
    }
    Ok(())
}
