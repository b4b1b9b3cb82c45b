//! Symmetric positive-definite matrices with a cached Cholesky factor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a factorization is rejected.
pub const PIVOT_TOL: f64 = 1e-12;

/// Symmetric tolerance, relative to the largest absolute entry.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

/// Lower Cholesky factor; fails when a pivot drops to `PIVOT_TOL` times the
/// largest diagonal entry. No jitter is ever added.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    if m.ncols() != p {
        return Err(Error::Matrix(format!("expected a square matrix, got {}x{}", p, m.ncols())));
    }
    if p == 0 {
        return Err(Error::Matrix("empty matrix".into()));
    }
    let max_diag = (0..p).map(|i| m[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    if !(max_diag > 0.0) || !max_diag.is_finite() {
        return Err(Error::Matrix("matrix has no positive diagonal".into()));
    }
    let floor = PIVOT_TOL * max_diag;
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(Error::Matrix(format!("Cholesky pivot {j} is {d:e}, not positive definite")));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..p {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

impl SpdMatrix {
    /// Wrap a matrix that must already be symmetric (to `SYMMETRY_TOL`) and
    /// positive definite.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Matrix("matrix has non-finite entries".into()));
        }
        let scale = entries.amax().max(f64::MIN_POSITIVE);
        let p = entries.nrows();
        if entries.ncols() != p {
            return Err(Error::Matrix(format!("expected a square matrix, got {}x{}", p, entries.ncols())));
        }
        for i in 0..p {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Matrix(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        let chol = cholesky(&entries)?;
        let log_det = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self { entries, chol, log_det })
    }

    /// Symmetrize `(m + m')/2` before factorizing.
    pub fn from_symmetrized(m: DMatrix<f64>) -> Result<Self> {
        let sym = (&m + m.transpose()) * 0.5;
        Self::new(sym)
    }

    pub fn identity(p: usize) -> Self {
        Self::new(DMatrix::identity(p, p)).expect("identity is SPD")
    }

    /// Build from a row-major nested vector.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Matrix("rows must form a square matrix".into()));
        }
        Self::new(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Lower-triangular Cholesky factor L with `L L' = self`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// L^{-1} x by forward substitution.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let p = self.dim();
        let mut out = vec![0.0; p];
        for i in 0..p {
            let mut s = x[i];
            for k in 0..i {
                s -= self.chol[(i, k)] * out[k];
            }
            out[i] = s / self.chol[(i, i)];
        }
        out
    }

    /// x' Σ^{-1} x.
    pub fn inv_quad_form(&self, x: &[f64]) -> f64 {
        self.whiten(x).iter().map(|w| w * w).sum()
    }

    /// Σ^{-1} b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = self.whiten(b);
        let p = self.dim();
        for i in (0..p).rev() {
            let mut s = y[i];
            for k in (i + 1)..p {
                s -= self.chol[(k, i)] * y[k];
            }
            y[i] = s / self.chol[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut inv = DMatrix::zeros(p, p);
        let mut e = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..p {
                inv[(i, j)] = col[i];
            }
        }
        (&inv + inv.transpose()) * 0.5
    }

    /// L x (maps standard normals to this covariance).
    pub fn chol_mul(&self, x: &[f64]) -> DVector<f64> {
        let p = self.dim();
        DVector::from_fn(p, |i, _| (0..=i).map(|k| self.chol[(i, k)] * x[k]).sum())
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entries[(i, i)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.entries)
    }
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SpdMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
