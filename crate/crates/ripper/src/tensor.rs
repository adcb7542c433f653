//! Minimal row-major `f64` tensor with just the operations the dense-network
//! engine needs. Nothing here allocates per element in hot loops, and every
//! reduction runs in a fixed left-to-right order so repeated evaluation of
//! the same values is bitwise reproducible — single rows and batched rows go
//! through identical per-row arithmetic.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` matches the shape's element
    /// count and contains only finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "tensor contains non-finite value {bad}"
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("cannot build a tensor from zero rows"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::shape(format!(
                    "row {} has {} columns, expected {}",
                    i,
                    row.len(),
                    cols
                )));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of rows when viewed as a matrix (rank-2) or a single row
    /// (rank-1).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Number of columns in the matrix view.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            _ => self.shape[self.shape.len() - 1],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    /// `self (m×k) · other (k×n)`, accumulated per output element in
    /// ascending-`k` order regardless of batch size.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul: {m}x{k} incompatible with {k2}x{n}"
            )));
        }
        let mut out = Tensor::zeros(vec![m, n]);
        for i in 0..m {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * n..(i + 1) * n];
            for (kk, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[kk * n..(kk + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }
}

/// Adds a length-`n` bias vector to every row of an `m×n` matrix in place.
pub(crate) fn add_bias_rows(mat: &mut Tensor, bias: &Tensor) {
    let n = mat.cols();
    debug_assert_eq!(bias.len(), n);
    for r in 0..mat.rows() {
        let row = &mut mat.data[r * n..(r + 1) * n];
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
}

/// `a^T (k×m viewed from m×k) · b (m×n)` — the weight-gradient contraction.
pub(crate) fn matmul_at_b(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.rows(), a.cols());
    let n = b.cols();
    debug_assert_eq!(b.rows(), m);
    let mut out = Tensor::zeros(vec![k, n]);
    for i in 0..m {
        let a_row = a.row(i);
        let b_row = b.row(i);
        for (kk, &av) in a_row.iter().enumerate() {
            let o_row = &mut out.data[kk * n..(kk + 1) * n];
            for (o, &bv) in o_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a (m×n) · b^T (n×k viewed from k×n)` — the upstream-gradient contraction.
pub(crate) fn matmul_a_bt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let k = b.rows();
    debug_assert_eq!(b.cols(), n);
    let mut out = Tensor::zeros(vec![m, k]);
    for i in 0..m {
        let a_row = a.row(i);
        for kk in 0..k {
            let b_row = b.row(kk);
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            out.data[i * k + kk] = acc;
        }
    }
    out
}

/// Sums an `m×n` matrix over rows into a length-`n` vector.
pub(crate) fn sum_rows(mat: &Tensor) -> Tensor {
    let n = mat.cols();
    let mut out = Tensor::zeros(vec![n]);
    for r in 0..mat.rows() {
        for (o, &v) in out.data.iter_mut().zip(mat.row(r)) {
            *o += v;
        }
    }
    out
}
