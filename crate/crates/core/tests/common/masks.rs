//! Brute-force references for the segmentation metrics.

use asyndgan::metrics::{dice, hd95_with, sensitivity, specificity, BinaryMask, Hd95Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    let bits = (0..w * h).map(|_| rng.random_bool(density)).collect();
    BinaryMask::new(w, h, bits).unwrap()
}

/// Pads the mask with a ring of background and keeps set pixels touching it.
fn oracle_boundary(m: &BinaryMask) -> Vec<(f64, f64)> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let at = |r: i64, c: i64| r >= 0 && c >= 0 && r < h && c < w && m.get(r as usize, c as usize);
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if at(r, c) && [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|(dr, dc)| !at(r + dr, c + dc)) {
                out.push((r as f64, c as f64));
            }
        }
    }
    out
}

fn oracle_directed(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<f64> {
    a.iter()
        .map(|p| b.iter().map(|q| (p.0 - q.0).hypot(p.1 - q.1)).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Smallest value with at least 95% of the set at or below it.
fn oracle_p95(v: &[f64]) -> f64 {
    let n = v.len();
    *v.iter()
        .filter(|&&x| v.iter().filter(|&&y| y <= x).count() * 100 >= 95 * n)
        .min_by(|a, b| a.total_cmp(b))
        .unwrap()
}

/// Compares every metric with the references on `cases` random masks up to
/// 16×16. Returns the first mismatch.
pub fn check_random_masks(seed: u64, cases: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fail = |case: usize, what: &str, got: f64, want: f64| {
        Err(format!("case {case}: {what} {got} != {want}"))
    };
    for case in 0..cases {
        let w = rng.random_range(1..=16);
        let h = rng.random_range(1..=16);
        let density = rng.random_range(0.05..0.95);
        let g = random_mask(&mut rng, w, h, density);
        let s = random_mask(&mut rng, w, h, density);
        let (mut tp, mut fp, mut fnn, mut tn) = (0.0, 0.0, 0.0, 0.0);
        for (&a, &b) in g.bits().iter().zip(s.bits()) {
            match (a, b) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fnn += 1.0,
                (false, false) => tn += 1.0,
            }
        }
        if tp + fp + fnn > 0.0 {
            let (got, want) = (dice(&g, &s).unwrap(), 2.0 * tp / (2.0 * tp + fp + fnn));
            if got != want {
                return fail(case, "dice", got, want);
            }
        }
        if tp + fnn > 0.0 {
            let (got, want) = (sensitivity(&g, &s).unwrap(), tp / (tp + fnn));
            if got != want {
                return fail(case, "sensitivity", got, want);
            }
        }
        if tn + fp > 0.0 {
            let (got, want) = (specificity(&g, &s).unwrap(), tn / (tn + fp));
            if got != want {
                return fail(case, "specificity", got, want);
            }
        }
        let (bg, bs) = (oracle_boundary(&g), oracle_boundary(&s));
        if bg.is_empty() || bs.is_empty() {
            if hd95_with(&g, &s, Hd95Mode::Max).is_ok() {
                return Err(format!("case {case}: hd95 of an empty boundary did not error"));
            }
            continue;
        }
        let (a, b) = (oracle_directed(&bg, &bs), oracle_directed(&bs, &bg));
        let max = oracle_p95(&a).max(oracle_p95(&b));
        let pooled = oracle_p95(&[a, b].concat());
        let got = hd95_with(&g, &s, Hd95Mode::Max).unwrap();
        if got != max {
            return fail(case, "hd95", got, max);
        }
        let got = hd95_with(&g, &s, Hd95Mode::Pooled).unwrap();
        if got != pooled {
            return fail(case, "pooled hd95", got, pooled);
        }
    }
    Ok(())
}
