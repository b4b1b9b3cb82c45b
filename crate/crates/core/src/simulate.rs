//! Exact simulation through the stochastic representation
//! Y = ξ + ω U V^{-1/2}, U = (−1)^{I(Z<0)} X, with (Z, X) jointly Gaussian,
//! corr(Z, X) = δ, corr(X) = Ω and V ~ Γ(ν/2, ν/2).

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distributions::{gamma_sample, standard_normals};
use crate::error::{Error, Result};
use crate::likelihood::Dataset;
use crate::linalg::SpdMatrix;
use crate::model::{correlation, delta_from_alpha, omega, AlphaParams, ModelSpec};
use crate::rng::RngStream;

/// Draw n rows from the `spec` member with parameters `truth`. Normal and
/// Student-t ignore α; Normal and SN fix V = 1 and ignore ν.
pub fn simulate_dataset(spec: ModelSpec, truth: &AlphaParams, n: usize, stream: RngStream) -> Result<Dataset> {
    let rows = simulate_rows(spec, truth, n, &mut stream.rng())?;
    Dataset::from_rows(&rows)
}

pub fn simulate_rows<R: Rng + ?Sized>(
    spec: ModelSpec,
    truth: &AlphaParams,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let p = truth.sigma.dim();
    if truth.xi.len() != p || truth.alpha.len() != p {
        return Err(Error::Matrix(format!("true parameters do not all have dimension {p}")));
    }
    if n == 0 {
        return Err(Error::Domain("cannot simulate an empty dataset".into()));
    }
    if spec.heavy_tailed && !(truth.nu > 0.0 && truth.nu.is_finite()) {
        return Err(Error::Domain(format!("heavy-tailed simulation needs finite ν > 0, got {}", truth.nu)));
    }
    let corr = correlation(&truth.sigma)?;
    let delta = if spec.skewed { delta_from_alpha(&truth.alpha, &corr)? } else { DVector::zeros(p) };
    let mut joint = DMatrix::<f64>::identity(p + 1, p + 1);
    for i in 0..p {
        joint[(0, i + 1)] = delta[i];
        joint[(i + 1, 0)] = delta[i];
        for j in 0..p {
            joint[(i + 1, j + 1)] = corr.matrix()[(i, j)];
        }
    }
    let joint = SpdMatrix::from_symmetrized(joint)
        .map_err(|_| Error::Constraint("δ lies outside its admissible ellipsoid".into()))?;
    let w = omega(&truth.sigma);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let zx = joint.chol_mul(&standard_normals(p + 1, rng));
        let sign = if zx[0] < 0.0 { -1.0 } else { 1.0 };
        let v = if spec.heavy_tailed { gamma_sample(0.5 * truth.nu, 0.5 * truth.nu, rng)? } else { 1.0 };
        let s = 1.0 / v.sqrt();
        rows.push((0..p).map(|j| truth.xi[j] + w[j] * sign * zx[j + 1] * s).collect());
    }
    Ok(rows)
}
