use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use super::MetricError;

/// `ln 4`; the game value at the optimum is `-LOG4`.
pub const LOG4: f64 = std::f64::consts::LN_2 * 2.0;

const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

/// Rectangular grid of cells, one [`Axis`] per dimension, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Self {
        Self { axes }
    }

    /// `count` unit cells on one axis starting at 0.
    pub fn line(count: usize) -> Self {
        Self::new(vec![Axis {
            start: 0.0,
            step: 1.0,
            count,
        }])
    }

    pub fn cells(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    /// Center coordinates of cell `i`.
    pub fn center(&self, mut i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (d, a) in self.axes.iter().enumerate().rev() {
            out[d] = a.start + (i % a.count) as f64 * a.step + 0.5 * a.step;
            i /= a.count;
        }
        out
    }
}

/// Probability masses on the cells of a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDist {
    grid: GridSpec,
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(grid: GridSpec, probs: Vec<f64>) -> Result<Self, MetricError> {
        if probs.len() != grid.cells() {
            return Err(MetricError::Distribution(format!(
                "{} masses for {} cells",
                probs.len(),
                grid.cells()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(MetricError::Distribution(format!("invalid mass {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(MetricError::Distribution(format!("masses sum to {sum}")));
        }
        Ok(Self { grid, probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(grid: GridSpec, weights: &[f64]) -> Result<Self, MetricError> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(MetricError::Distribution(format!("weights sum to {sum}")));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        let fix = 1.0 - probs.iter().sum::<f64>();
        let mut d = Self { grid, probs };
        // Push the rounding residue into the largest cell.
        if let Some(i) = (0..d.probs.len()).max_by(|&a, &b| d.probs[a].total_cmp(&d.probs[b])) {
            d.probs[i] += fix;
        }
        Self::new(d.grid, d.probs)
    }

    /// Discretizes a density by evaluating it at cell centers.
    pub fn from_density(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self, MetricError> {
        let w: Vec<f64> = (0..grid.cells()).map(|i| f(&grid.center(i))).collect();
        Self::from_weights(grid, &w)
    }

    pub fn uniform(grid: GridSpec) -> Self {
        let n = grid.cells();
        Self::from_weights(grid, &vec![1.0; n]).expect("non-empty grid")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total_variation(&self, other: &Self) -> Result<f64, MetricError> {
        same_grid(self, other)?;
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

fn same_grid(a: &DiscreteDist, b: &DiscreteDist) -> Result<(), MetricError> {
    if a.grid != b.grid {
        return Err(MetricError::GridMismatch);
    }
    Ok(())
}

/// `p / (p + q)` per cell; `None` where both vanish.
pub fn optimal_discriminator(
    p: &DiscreteDist,
    q: &DiscreteDist,
) -> Result<Vec<Option<f64>>, MetricError> {
    same_grid(p, q)?;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(&a, &b)| (a + b > 0.0).then(|| a / (a + b)))
        .collect())
}

/// `Σ p·ln D + q·ln(1 - D)` over cells carrying mass.
pub fn discriminator_value(
    p: &DiscreteDist,
    q: &DiscreteDist,
    d: &[f64],
) -> Result<f64, MetricError> {
    same_grid(p, q)?;
    if d.len() != p.probs.len() {
        return Err(MetricError::Dimension(format!(
            "{} discriminator values for {} cells",
            d.len(),
            p.probs.len()
        )));
    }
    let mut v = 0.0;
    for ((&a, &b), &di) in p.probs.iter().zip(&q.probs).zip(d) {
        if a > 0.0 {
            v += a * di.ln();
        }
        if b > 0.0 {
            v += b * (1.0 - di).ln();
        }
    }
    Ok(v)
}

fn xlog(x: f64, s: f64) -> f64 {
    if x > 0.0 {
        x * (x / s).ln()
    } else {
        0.0
    }
}

/// `Σ p·ln(p/(p+q)) + q·ln(q/(p+q))`: the value with the optimal
/// discriminator plugged in, for one condition.
pub fn pair_value(p: &DiscreteDist, q: &DiscreteDist) -> Result<f64, MetricError> {
    same_grid(p, q)?;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(&a, &b)| xlog(a, a + b) + xlog(b, a + b))
        .sum())
}

/// [`pair_value`] with the precondition that every cell where `a` has mass
/// also has mass under `b`. Bounded below by `-ln 4`, with equality iff `a == b`.
pub fn lemma2_loss(a: &DiscreteDist, b: &DiscreteDist) -> Result<f64, MetricError> {
    same_grid(a, b)?;
    if let Some(i) = a
        .probs
        .iter()
        .zip(&b.probs)
        .position(|(&x, &y)| x > 0.0 && y == 0.0)
    {
        return Err(MetricError::Support(i));
    }
    pair_value(a, b)
}

/// One node's condition distribution with real and synthetic conditionals,
/// one pair per condition cell.
#[derive(Debug, Clone)]
pub struct NodeDistributions {
    pub condition: DiscreteDist,
    pub real: Vec<DiscreteDist>,
    pub synthetic: Vec<DiscreteDist>,
}

/// `Σ_j π_j Σ_x s_j(x) · pair_value(p(·|x), q(·|x))`.
pub fn value_functional(nodes: &[NodeDistributions], priors: &[f64]) -> Result<f64, MetricError> {
    if nodes.len() != priors.len() {
        return Err(MetricError::Dimension(format!(
            "{} nodes, {} priors",
            nodes.len(),
            priors.len()
        )));
    }
    let total: f64 = priors.iter().sum();
    if (total - 1.0).abs() > NORM_TOL || priors.iter().any(|p| !(*p >= 0.0)) {
        return Err(MetricError::Config(format!("priors sum to {total}")));
    }
    let mut v = 0.0;
    for (node, &pi) in nodes.iter().zip(priors) {
        let cells = node.condition.probs.len();
        if node.real.len() != cells || node.synthetic.len() != cells {
            return Err(MetricError::Dimension(format!(
                "{cells} condition cells, {} real and {} synthetic conditionals",
                node.real.len(),
                node.synthetic.len()
            )));
        }
        for ((&s, p), q) in node.condition.probs.iter().zip(&node.real).zip(&node.synthetic) {
            if s > 0.0 {
                v += pi * s * pair_value(p, q)?;
            }
        }
    }
    Ok(v)
}

/// Point on the probability simplex from a symmetric Dirichlet(`alpha`).
pub fn random_simplex(rng: &mut impl Rng, n: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    loop {
        let w: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return w.iter().map(|x| x / s).collect();
        }
    }
}

/// Numerical verification of the optimum of the game on random discrete
/// distributions, as written into run reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub expected_optimal_value: f64,
    pub trials: usize,
    /// Largest `|V(p, p) + ln 4|`.
    pub max_error_at_optimum: f64,
    /// Smallest `V(p, q) + ln 4` over `q ≠ p` with total variation ≥ 0.01.
    pub min_gap_away_from_optimum: f64,
    /// Perturbations of `p/(p+q)` that scored higher than it.
    pub discriminator_violations: usize,
    /// Smallest `L(a) + ln 4` over random pairs.
    pub min_lemma2_margin: f64,
    pub passed: bool,
}

pub fn theory_check(seed: u64, trials: usize) -> TheoryReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = GridSpec::new(vec![
        Axis {
            start: -2.0,
            step: 0.5,
            count: 8,
        },
        Axis {
            start: -2.0,
            step: 0.5,
            count: 8,
        },
    ]);
    let dist = |rng: &mut ChaCha8Rng| {
        DiscreteDist::from_weights(grid.clone(), &random_simplex(rng, grid.cells(), 1.0))
            .expect("valid weights")
    };
    let mut max_err: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    for _ in 0..trials {
        let p = dist(&mut rng);
        let at = pair_value(&p, &p).expect("same grid");
        max_err = max_err.max((at + LOG4).abs());
        let q = loop {
            let q = dist(&mut rng);
            if p.total_variation(&q).expect("same grid") >= 0.01 {
                break q;
            }
        };
        min_gap = min_gap.min(pair_value(&p, &q).expect("same grid") + LOG4);
        min_margin = min_margin.min(lemma2_loss(&q, &p).expect("full support") + LOG4);

        let d: Vec<f64> = optimal_discriminator(&p, &q)
            .expect("same grid")
            .into_iter()
            .map(|v| v.unwrap_or(0.5))
            .collect();
        let best = discriminator_value(&p, &q, &d).expect("same grid");
        let perturbed: Vec<f64> = d
            .iter()
            .map(|&v| (v + rng.random_range(-0.05..0.05)).clamp(1e-9, 1.0 - 1e-9))
            .collect();
        if discriminator_value(&p, &q, &perturbed).expect("same grid") > best {
            violations += 1;
        }
    }
    TheoryReport {
        expected_optimal_value: -LOG4,
        trials,
        max_error_at_optimum: max_err,
        min_gap_away_from_optimum: min_gap,
        discriminator_violations: violations,
        min_lemma2_margin: min_margin,
        passed: max_err <= 1e-9 && min_gap > 1e-6 && violations == 0 && min_margin >= -1e-12,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(w: &[f64]) -> DiscreteDist {
        DiscreteDist::from_weights(GridSpec::line(w.len()), w).unwrap()
    }

    #[test]
    fn equal_distributions_give_half() {
        let p = dist(&[1.0, 2.0, 0.0, 3.0]);
        let d = optimal_discriminator(&p, &p).unwrap();
        assert_eq!(d, vec![Some(0.5), Some(0.5), None, Some(0.5)]);
    }

    #[test]
    fn double_mass_gives_two_thirds() {
        let p = DiscreteDist::new(GridSpec::line(2), vec![0.5, 0.5]).unwrap();
        let q = DiscreteDist::new(GridSpec::line(2), vec![0.25, 0.75]).unwrap();
        let d = optimal_discriminator(&p, &q).unwrap();
        assert!((d[0].unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_pair_hits_minus_log4() {
        let u = DiscreteDist::uniform(GridSpec::line(4));
        assert!((lemma2_loss(&u, &u).unwrap() + LOG4).abs() < 1e-15);
    }

    #[test]
    fn point_mass_against_uniform() {
        let a = dist(&[1.0, 0.0]);
        let b = dist(&[1.0, 1.0]);
        // a·ln(1/1.5) + 0.5·ln(0.5/1.5) + 0.5·ln(1)
        let expected = (1.0f64 / 1.5).ln() + 0.5 * (1.0f64 / 3.0).ln();
        let v = lemma2_loss(&a, &b).unwrap();
        assert!((v - expected).abs() < 1e-15);
        assert!(v >= -LOG4);
        assert_eq!(lemma2_loss(&b, &a), Err(MetricError::Support(1)));
    }

    #[test]
    fn normalization_enforced() {
        assert!(DiscreteDist::new(GridSpec::line(2), vec![0.5, 0.6]).is_err());
        assert!(DiscreteDist::new(GridSpec::line(2), vec![-0.5, 1.5]).is_err());
        assert!(DiscreteDist::new(GridSpec::line(3), vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn grid_mismatch() {
        let a = DiscreteDist::uniform(GridSpec::line(2));
        let b = DiscreteDist::uniform(GridSpec::line(3));
        assert_eq!(pair_value(&a, &b), Err(MetricError::GridMismatch));
    }

    #[test]
    fn disjoint_conditions_matched_per_node() {
        let cond = DiscreteDist::uniform(GridSpec::line(2));
        let p1 = dist(&[1.0, 3.0, 0.0]);
        let p2 = dist(&[0.0, 1.0, 1.0]);
        let node = |p: &DiscreteDist| NodeDistributions {
            condition: cond.clone(),
            real: vec![p.clone(), p.clone()],
            synthetic: vec![p.clone(), p.clone()],
        };
        let v = value_functional(&[node(&p1), node(&p2)], &[0.3, 0.7]).unwrap();
        assert!((v + LOG4).abs() < 1e-12);
        assert!(value_functional(&[node(&p1)], &[0.9]).is_err());
    }

    #[test]
    fn grid_centers_row_major() {
        let g = GridSpec::new(vec![
            Axis { start: 0.0, step: 1.0, count: 2 },
            Axis { start: 10.0, step: 2.0, count: 3 },
        ]);
        assert_eq!(g.center(0), vec![0.5, 11.0]);
        assert_eq!(g.center(4), vec![1.5, 13.0]);
    }

    #[test]
    fn report_passes() {
        let r = theory_check(7, 20);
        assert!(r.passed, "{r:?}");
        assert_eq!(r.expected_optimal_value, -LOG4);
    }
}
