//! Correlation matrices for the Gaussian and Student-t copulas.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Smallest eigenvalue a correlation matrix may have.
pub const MIN_EIGENVALUE: f64 = 1e-10;

/// A validated correlation matrix with its Cholesky factor, inverse and log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    dim: usize,
    values: Vec<f64>,
    chol: Vec<f64>,
    inv: Vec<f64>,
    log_det: f64,
}

impl CorrelationMatrix {
    /// Validates a row-major `dim × dim` matrix: symmetric, unit diagonal, positive definite.
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: values.len(),
            });
        }
        for i in 0..dim {
            if (values[i * dim + i] - 1.0).abs() > 1e-12 {
                return Err(Error::Parameter(format!(
                    "correlation diagonal entry {i} is {}",
                    values[i * dim + i]
                )));
            }
            for j in 0..i {
                let (a, b) = (values[i * dim + j], values[j * dim + i]);
                if !a.is_finite() || (a - b).abs() > 1e-12 || a.abs() >= 1.0 {
                    return Err(Error::Parameter(format!(
                        "correlation entries ({i},{j}) = {a} and ({j},{i}) = {b} are invalid"
                    )));
                }
            }
        }
        let mut values = values;
        for i in 0..dim {
            values[i * dim + i] = 1.0;
            for j in 0..i {
                values[j * dim + i] = values[i * dim + j];
            }
        }
        let m = DMatrix::from_row_slice(dim, dim, &values);
        let eig = SymmetricEigen::new(m.clone());
        let min_eig = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !(min_eig > MIN_EIGENVALUE) {
            return Err(Error::Parameter(format!(
                "correlation matrix is not positive definite (smallest eigenvalue {min_eig:e})"
            )));
        }
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Parameter("correlation matrix has no Cholesky factor".into()))?;
        let l = chol.l();
        let inv = chol.inverse();
        let log_det = 2.0 * (0..dim).map(|i| l[(i, i)].ln()).sum::<f64>();
        let mut lv = vec![0.0; dim * dim];
        let mut iv = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                lv[i * dim + j] = l[(i, j)];
                iv[i * dim + j] = inv[(i, j)];
            }
        }
        Ok(CorrelationMatrix {
            dim,
            values,
            chol: lv,
            inv: iv,
            log_det,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut v = vec![0.0; dim * dim];
        for i in 0..dim {
            v[i * dim + i] = 1.0;
        }
        CorrelationMatrix {
            dim,
            values: v.clone(),
            chol: v.clone(),
            inv: v,
            log_det: 0.0,
        }
    }

    /// All off-diagonal entries equal to `rho`.
    pub fn equicorrelation(dim: usize, rho: f64) -> Result<Self> {
        let mut v = vec![rho; dim * dim];
        for i in 0..dim {
            v[i * dim + i] = 1.0;
        }
        Self::new(dim, v)
    }

    pub fn bivariate(rho: f64) -> Result<Self> {
        Self::new(2, vec![1.0, rho, rho, 1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    /// Row-major entries.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Lower Cholesky factor, row-major.
    pub fn cholesky(&self) -> &[f64] {
        &self.chol
    }

    /// Inverse matrix, row-major.
    pub fn inverse(&self) -> &[f64] {
        &self.inv
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Quadratic form xᵀR⁻¹x.
    pub fn mahalanobis(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut q = 0.0;
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.inv[i * d + j] * x[j];
            }
            q += x[i] * s;
        }
        q
    }

    /// The principal submatrix on `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Result<Self> {
        let k = idx.len();
        let mut v = vec![0.0; k * k];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                v[a * k + b] = self.get(i, j);
            }
        }
        Self::new(k, v)
    }

    /// Projects a symmetric matrix with unit diagonal onto the positive definite cone by
    /// clipping eigenvalues at `floor` and rescaling back to a unit diagonal.
    pub fn nearest(dim: usize, values: &[f64], floor: f64) -> Result<Self> {
        let mut m = DMatrix::from_row_slice(dim, dim, values);
        m = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(m);
        let clipped = eig.eigenvalues.map(|e| e.max(floor));
        let q = &eig.eigenvectors;
        let rebuilt = q * DMatrix::from_diagonal(&clipped) * q.transpose();
        let mut out = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let s = (rebuilt[(i, i)] * rebuilt[(j, j)]).sqrt();
                out[i * dim + j] = if i == j { 1.0 } else { rebuilt[(i, j)] / s };
            }
        }
        Self::new(dim, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(CorrelationMatrix::bivariate(0.5).is_ok());
        assert!(CorrelationMatrix::bivariate(1.0).is_err());
        assert!(CorrelationMatrix::new(2, vec![1.0, 0.3, 0.2, 1.0]).is_err());
        assert!(CorrelationMatrix::new(2, vec![2.0, 0.3, 0.3, 1.0]).is_err());
        // pairwise valid, jointly indefinite
        let bad = vec![1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0];
        assert!(CorrelationMatrix::new(3, bad.clone()).is_err());
        let fixed = CorrelationMatrix::nearest(3, &bad, 1e-6).unwrap();
        assert_eq!(fixed.get(1, 1), 1.0);
    }

    #[test]
    fn cached_factors() {
        let r = CorrelationMatrix::bivariate(0.6).unwrap();
        assert!((r.log_det() - (1.0f64 - 0.36).ln()).abs() < 1e-14);
        assert!((r.mahalanobis(&[1.0, 1.0]) - 2.0 / 1.6).abs() < 1e-14);
        let l = r.cholesky();
        assert!((l[2] - 0.6).abs() < 1e-15 && (l[3] - 0.8).abs() < 1e-15);
    }
}
