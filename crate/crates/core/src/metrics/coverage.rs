use serde::Serialize;

use super::MetricError;
use crate::autodiff::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coverage {
    /// Fraction of samples within the radius of each center, in center order.
    pub per_mode: Vec<f64>,
    pub outliers: f64,
}

impl Coverage {
    pub fn min_mode(&self) -> f64 {
        self.per_mode.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_mode(&self) -> f64 {
        self.per_mode.iter().copied().fold(0.0, f64::max)
    }
}

/// Assigns each row of `samples` (`[n, 2]`) to the center it lies within
/// `radius` of, if any. Centers must be more than `2·radius` apart so the
/// assignment is unambiguous.
pub fn mode_coverage(
    samples: &Tensor,
    centers: &[[f64; 2]],
    radius: f64,
) -> Result<Coverage, MetricError> {
    if !(radius > 0.0) {
        return Err(MetricError::Config(format!("radius must be > 0, got {radius}")));
    }
    for (i, a) in centers.iter().enumerate() {
        for b in &centers[i + 1..] {
            if (a[0] - b[0]).hypot(a[1] - b[1]) <= 2.0 * radius {
                return Err(MetricError::Config(format!(
                    "centers {a:?} and {b:?} are within 2 x radius {radius}"
                )));
            }
        }
    }
    let n = samples.rows();
    if n == 0 {
        return Ok(Coverage {
            per_mode: vec![0.0; centers.len()],
            outliers: 0.0,
        });
    }
    if samples.cols() != 2 {
        return Err(MetricError::Dimension(format!(
            "samples must be [n, 2], got {:?}",
            samples.shape()
        )));
    }
    let mut hits = vec![0usize; centers.len()];
    let mut outliers = 0usize;
    for i in 0..n {
        let p = samples.row(i);
        match centers
            .iter()
            .position(|c| (p[0] - c[0]).hypot(p[1] - c[1]) <= radius)
        {
            Some(k) => hits[k] += 1,
            None => outliers += 1,
        }
    }
    Ok(Coverage {
        per_mode: hits.iter().map(|&h| h as f64 / n as f64).collect(),
        outliers: outliers as f64 / n as f64,
    })
}
