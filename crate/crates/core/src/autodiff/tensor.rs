use std::fmt;

use super::AutodiffError;

/// Dense row-major tensor of `f64`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, AutodiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AutodiffError::Dimension {
                layer: "tensor".into(),
                expected: format!("{expected} elements for shape {shape:?}"),
                actual: format!("{} elements", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Builds a `[rows.len(), width]` matrix. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * width);
        for row in rows {
            let row = row.as_ref();
            assert_eq!(row.len(), width, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            shape: vec![rows.len(), width],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count of a matrix (first dimension).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Column count of a matrix (product of trailing dimensions).
    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    pub fn add_assign_scaled(&mut self, other: &Tensor, k: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, AutodiffError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(AutodiffError::Dimension {
                layer: "reshape".into(),
                expected: format!("{} elements", self.data.len()),
                actual: format!("shape {shape:?}"),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// `self · rhs` for matrices `[n, k] x [k, p]`.
    pub(crate) fn matmul(&self, rhs: &Tensor) -> Tensor {
        let (n, k) = (self.rows(), self.cols());
        let p = rhs.cols();
        debug_assert_eq!(k, rhs.rows());
        let mut out = vec![0.0; n * p];
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * p..(i + 1) * p];
            for (kk, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &rhs.data[kk * p..(kk + 1) * p];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor {
            shape: vec![n, p],
            data: out,
        }
    }

    /// `selfᵀ · rhs` for `[n, k]ᵀ x [n, p]`.
    pub(crate) fn t_matmul(&self, rhs: &Tensor) -> Tensor {
        let (n, k) = (self.rows(), self.cols());
        let p = rhs.cols();
        debug_assert_eq!(n, rhs.rows());
        let mut out = vec![0.0; k * p];
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            let b_row = &rhs.data[i * p..(i + 1) * p];
            for (kk, &a) in a_row.iter().enumerate() {
                let o_row = &mut out[kk * p..(kk + 1) * p];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor {
            shape: vec![k, p],
            data: out,
        }
    }

    /// `self · rhsᵀ` for `[n, p] x [k, p]ᵀ`.
    pub(crate) fn matmul_t(&self, rhs: &Tensor) -> Tensor {
        let (n, p) = (self.rows(), self.cols());
        let k = rhs.rows();
        debug_assert_eq!(p, rhs.cols());
        let mut out = vec![0.0; n * k];
        for i in 0..n {
            let a_row = &self.data[i * p..(i + 1) * p];
            for j in 0..k {
                let b_row = &rhs.data[j * p..(j + 1) * p];
                out[i * k + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Tensor {
            shape: vec![n, k],
            data: out,
        }
    }

    /// Column-wise concatenation of two matrices with equal row counts.
    pub fn hcat(&self, other: &Tensor) -> Tensor {
        let n = self.rows();
        debug_assert_eq!(n, other.rows());
        let (a, b) = (self.cols(), other.cols());
        let mut data = Vec::with_capacity(n * (a + b));
        for i in 0..n {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Tensor {
            shape: vec![n, a + b],
            data,
        }
    }

    /// Columns `[start, start + width)` of a matrix.
    pub fn columns(&self, start: usize, width: usize) -> Tensor {
        let n = self.rows();
        let c = self.cols();
        debug_assert!(start + width <= c);
        let mut data = Vec::with_capacity(n * width);
        for i in 0..n {
            data.extend_from_slice(&self.data[i * c + start..i * c + start + width]);
        }
        Tensor {
            shape: vec![n, width],
            data,
        }
    }

    /// Writes `block` into columns `[start, start + block.cols())`.
    pub fn set_columns(&mut self, start: usize, block: &Tensor) {
        let n = self.rows();
        let c = self.cols();
        let w = block.cols();
        debug_assert_eq!(n, block.rows());
        for i in 0..n {
            self.data[i * c + start..i * c + start + w].copy_from_slice(block.row(i));
        }
    }

    /// Rows selected by index, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        if shape.is_empty() {
            shape.push(0);
        }
        shape[0] = idx.len();
        Tensor { shape, data }
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vcat(parts: &[Tensor]) -> Tensor {
        let c = parts.first().map_or(0, Tensor::cols);
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            debug_assert_eq!(p.cols(), c);
            n += p.rows();
            data.extend_from_slice(&p.data);
        }
        Tensor {
            shape: vec![n, c],
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let b = Tensor::from_rows(&[[1.0, 0.5, -1.0], [2.0, 0.0, 1.0]]);
        let ab = a.matmul(&b);
        assert_eq!(ab.shape(), &[3, 3]);
        assert_eq!(ab.row(0), &[5.0, 0.5, 1.0]);

        // (aᵀ)ᵀ b-ish identities through transposed kernels
        let bt = Tensor::from_rows(&[[1.0, 2.0], [0.5, 0.0], [-1.0, 1.0]]);
        assert_eq!(a.matmul_t(&bt), ab);
        let at = Tensor::from_rows(&[[1.0, 3.0, 5.0], [2.0, 4.0, 6.0]]);
        assert_eq!(at.t_matmul(&b), ab);
    }

    #[test]
    fn column_slicing_round_trips() {
        let a = Tensor::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let left = a.columns(0, 1);
        let right = a.columns(1, 2);
        assert_eq!(left.hcat(&right), a);
        let mut z = Tensor::zeros(&[2, 3]);
        z.set_columns(1, &right);
        assert_eq!(z.row(1), &[0.0, 5.0, 6.0]);
    }
}
