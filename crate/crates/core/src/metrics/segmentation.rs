use serde::{Deserialize, Serialize};

use super::MetricError;

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, MetricError> {
        if bits.len() != width * height {
            return Err(MetricError::Dimension(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    /// Mask with the listed `(row, col)` pixels set.
    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: &[(usize, usize)],
    ) -> Result<Self, MetricError> {
        let mut m = Self::empty(width, height);
        for &(r, c) in pixels {
            if r >= height || c >= width {
                return Err(MetricError::Dimension(format!(
                    "pixel ({r}, {c}) outside {width}x{height}"
                )));
            }
            m.bits[r * width + c] = true;
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn check_same(&self, other: &Self) -> Result<(), MetricError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(MetricError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

fn intersection(a: &BinaryMask, b: &BinaryMask) -> usize {
    a.bits.iter().zip(&b.bits).filter(|(&x, &y)| x && y).count()
}

/// `2|G∩S| / (|G|+|S|)`; two empty masks agree perfectly (1.0).
pub fn dice(truth: &BinaryMask, seg: &BinaryMask) -> Result<f64, MetricError> {
    truth.check_same(seg)?;
    let denom = truth.count() + seg.count();
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * intersection(truth, seg) as f64 / denom as f64)
}

/// `|G∩S| / |G|`.
pub fn sensitivity(truth: &BinaryMask, seg: &BinaryMask) -> Result<f64, MetricError> {
    truth.check_same(seg)?;
    let g = truth.count();
    if g == 0 {
        return Err(MetricError::Degenerate("sensitivity"));
    }
    Ok(intersection(truth, seg) as f64 / g as f64)
}

/// `|(1-G)∩(1-S)| / |1-G|`.
pub fn specificity(truth: &BinaryMask, seg: &BinaryMask) -> Result<f64, MetricError> {
    truth.check_same(seg)?;
    let (gc, sc) = (truth.complement(), seg.complement());
    let neg = gc.count();
    if neg == 0 {
        return Err(MetricError::Degenerate("specificity"));
    }
    Ok(intersection(&gc, &sc) as f64 / neg as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overlap {
    pub dice: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

pub fn overlap_metrics(truth: &BinaryMask, seg: &BinaryMask) -> Result<Overlap, MetricError> {
    Ok(Overlap {
        dice: dice(truth, seg)?,
        sensitivity: sensitivity(truth, seg)?,
        specificity: specificity(truth, seg)?,
    })
}

/// Set pixels with at least one 4-neighbour outside the mask; the image border
/// counts as outside. Returned as `(row, col)` in row-major order.
pub fn boundary(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width, mask.height);
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let edge = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask.get(r - 1, c)
                || !mask.get(r + 1, c)
                || !mask.get(r, c - 1)
                || !mask.get(r, c + 1);
            if edge {
                out.push((r, c));
            }
        }
    }
    out
}

/// How the two directed distance sets are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hd95Mode {
    /// Larger of the two directed 95th percentiles.
    #[default]
    Max,
    /// 95th percentile of both directed sets taken together.
    Pooled,
}

fn directed(from: &[(usize, usize)], to: &[(usize, usize)]) -> Vec<f64> {
    from.iter()
        .map(|&(r, c)| {
            to.iter()
                .map(|&(r2, c2)| {
                    let dr = r.abs_diff(r2);
                    let dc = c.abs_diff(c2);
                    dr * dr + dc * dc
                })
                .min()
                .expect("non-empty boundary")
        })
        .map(|d2| (d2 as f64).sqrt())
        .collect()
}

/// Nearest-rank 95th percentile.
fn percentile95(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let rank = (95 * v.len()).div_ceil(100).max(1);
    v[rank - 1]
}

pub fn hd95(truth: &BinaryMask, seg: &BinaryMask) -> Result<f64, MetricError> {
    hd95_with(truth, seg, Hd95Mode::Max)
}

/// 95th-percentile Hausdorff distance between mask boundaries, in pixels.
pub fn hd95_with(truth: &BinaryMask, seg: &BinaryMask, mode: Hd95Mode) -> Result<f64, MetricError> {
    truth.check_same(seg)?;
    let (bg, bs) = (boundary(truth), boundary(seg));
    if bg.is_empty() || bs.is_empty() {
        return Err(MetricError::EmptyMask);
    }
    let (a, b) = (directed(&bg, &bs), directed(&bs, &bg));
    Ok(match mode {
        Hd95Mode::Max => percentile95(a).max(percentile95(b)),
        Hd95Mode::Pooled => percentile95([a, b].concat()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_masks() {
        let g = BinaryMask::from_pixels(4, 4, &[(1, 1), (1, 2), (2, 1)]).unwrap();
        let o = overlap_metrics(&g, &g).unwrap();
        assert_eq!((o.dice, o.sensitivity, o.specificity), (1.0, 1.0, 1.0));
        assert_eq!(hd95(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn two_by_two_example() {
        let g = BinaryMask::from_pixels(2, 2, &[(0, 0), (0, 1)]).unwrap();
        let s = BinaryMask::from_pixels(2, 2, &[(0, 1), (1, 1)]).unwrap();
        let o = overlap_metrics(&g, &s).unwrap();
        assert_eq!((o.dice, o.sensitivity, o.specificity), (0.5, 0.5, 0.5));
    }

    #[test]
    fn empty_masks() {
        let e = BinaryMask::empty(3, 3);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert_eq!(
            sensitivity(&e, &e),
            Err(MetricError::Degenerate("sensitivity"))
        );
        assert_eq!(hd95(&e, &e), Err(MetricError::EmptyMask));
        let full = e.complement();
        assert_eq!(
            specificity(&full, &full),
            Err(MetricError::Degenerate("specificity"))
        );
    }

    #[test]
    fn single_pixels_five_apart() {
        let g = BinaryMask::from_pixels(8, 8, &[(1, 1)]).unwrap();
        let s = BinaryMask::from_pixels(8, 8, &[(1, 6)]).unwrap();
        assert_eq!(hd95(&g, &s).unwrap(), 5.0);
        assert_eq!(hd95_with(&g, &s, Hd95Mode::Pooled).unwrap(), 5.0);
    }

    #[test]
    fn interior_pixels_are_not_boundary() {
        let all: Vec<_> = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).collect();
        let m = BinaryMask::from_pixels(5, 5, &all).unwrap();
        let b = boundary(&m);
        assert_eq!(b.len(), 8);
        assert!(!b.contains(&(1, 1)));
    }

    #[test]
    fn dimension_mismatch() {
        let a = BinaryMask::empty(2, 2);
        let b = BinaryMask::empty(3, 2);
        assert!(matches!(dice(&a, &b), Err(MetricError::Dimension(_))));
        assert!(BinaryMask::new(2, 2, vec![true; 3]).is_err());
    }

    #[test]
    fn percentile_uses_nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile95(v), 19.0);
        assert_eq!(percentile95(vec![3.0]), 3.0);
    }
}
