//! Dense symmetric matrices and the jittered Cholesky factorization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::usage("matrix rows must all have length equal to the row count"));
        }
        Ok(Self { dim, data: rows.concat() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Relative jitter `lambda` in `lambda * trace / dim * I`, added once if the first attempt fails.
pub const JITTER_LAMBDA: f64 = 1e-12;

/// Lower-triangular Cholesky factor in packed row storage.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    /// Row `i` occupies `packed[i(i+1)/2 .. i(i+1)/2 + i + 1]`.
    packed: Vec<f64>,
    /// Diagonal shift that was needed, zero when the plain factorization succeeded.
    pub jitter: f64,
    /// Identifies the matrix this factors, e.g. the model parameters and grid size.
    pub source_key: String,
}

impl CholeskyFactor {
    /// Factors `cov`; on failure retries once with the documented diagonal jitter.
    pub fn new(cov: &Matrix, source_key: impl Into<String>) -> Result<Self> {
        let source_key = source_key.into();
        if !cov.is_symmetric() {
            return Err(Error::usage("cholesky: matrix is not symmetric"));
        }
        if let Some(packed) = factor_packed(cov, 0.0) {
            return Ok(Self { dim: cov.dim(), packed, jitter: 0.0, source_key });
        }
        let dim = cov.dim();
        let jitter = JITTER_LAMBDA * cov.trace() / dim as f64;
        match factor_packed(cov, jitter) {
            Some(packed) => Ok(Self { dim, packed, jitter, source_key }),
            None => Err(Error::Factorization(format!(
                "matrix {source_key} is indefinite even after diagonal jitter {jitter:e}"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.packed[start..start + i + 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.row(i)[j]
        }
    }

    /// `out = mean + L g`.
    #[inline]
    pub fn affine_apply(&self, mean: &[f64], g: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = mean[i] + dot(self.row(i), &g[..=i]);
        }
    }

    /// `L Lᵀ` as a dense matrix.
    pub fn reconstruct(&self) -> Matrix {
        let mut m = Matrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..=i {
                let v = dot(&self.row(i)[..=j], self.row(j));
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Row-oriented Cholesky of `cov + shift I`; `None` when a pivot is not positive.
/// Exactly zero rows (degenerate coordinates) get a zero column.
fn factor_packed(cov: &Matrix, shift: f64) -> Option<Vec<f64>> {
    let n = cov.dim();
    let mut packed = vec![0.0; n * (n + 1) / 2];
    for i in 0..n {
        let ri = i * (i + 1) / 2;
        for j in 0..=i {
            let rj = j * (j + 1) / 2;
            let s = dot(&packed[ri..ri + j], &packed[rj..rj + j]);
            if i == j {
                let d = cov.get(i, i) + shift - s;
                if d > 0.0 {
                    packed[ri + i] = d.sqrt();
                } else if d == 0.0 && cov.get(i, i) == 0.0 && shift == 0.0 {
                    packed[ri + i] = 0.0;
                } else {
                    return None;
                }
            } else {
                let ljj = packed[rj + j];
                packed[ri + j] = if ljj == 0.0 { 0.0 } else { (cov.get(i, j) - s) / ljj };
            }
        }
    }
    Some(packed)
}
