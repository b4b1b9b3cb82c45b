//! Densities and samplers for the Gaussian, Student-t, Gamma, inverse
//! Wishart, truncated normal and skew-normal kernels.
//!
//! Conventions: Gamma is shape–rate (density ∝ v^{shape-1} e^{-rate v}), and
//! the inverse Wishart IW(m, Λ) has density ∝ |X|^{-(m+p+1)/2} exp(-½ tr(Λ X^{-1})).
//! Samplers draw only from the generator they are handed.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{domain, Error, Result};
use crate::linalg::SpdMatrix;
use crate::specfun::{ln_gamma_unchecked, ln_normal_cdf, LN_SQRT_2PI};

fn check_dims(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Matrix(format!("{what}: dimension {a} does not match {b}")));
    }
    Ok(())
}

fn diff(x: &DVector<f64>, mean: &DVector<f64>) -> Vec<f64> {
    x.iter().zip(mean.iter()).map(|(a, b)| a - b).collect()
}

/// Log density of N_p(mean, cov).
pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &SpdMatrix) -> Result<f64> {
    check_dims("mvn_logpdf", x.len(), mean.len())?;
    check_dims("mvn_logpdf", x.len(), cov.dim())?;
    let p = x.len() as f64;
    let q = cov.inv_quad_form(&diff(x, mean));
    Ok(-p * LN_SQRT_2PI - 0.5 * cov.log_det() - 0.5 * q)
}

pub fn standard_normals<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    (0..p).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draw mean + L z with L the Cholesky factor of `cov`.
pub fn mvn_sample<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &SpdMatrix, rng: &mut R) -> Result<DVector<f64>> {
    check_dims("mvn_sample", mean.len(), cov.dim())?;
    let z = standard_normals(cov.dim(), rng);
    Ok(mean + cov.chol_mul(&z))
}

/// Log density of the p-variate Student-t with location `loc`, scale matrix
/// `scale` and `dof` degrees of freedom.
pub fn mvt_logpdf(y: &DVector<f64>, loc: &DVector<f64>, scale: &SpdMatrix, dof: f64) -> Result<f64> {
    if !(dof > 0.0) {
        return domain(format!("mvt_logpdf requires dof > 0, got {dof}"));
    }
    check_dims("mvt_logpdf", y.len(), loc.len())?;
    check_dims("mvt_logpdf", y.len(), scale.dim())?;
    let q = scale.inv_quad_form(&diff(y, loc));
    Ok(mvt_logpdf_from_quad(q, y.len(), scale.log_det(), dof))
}

pub(crate) fn mvt_logpdf_from_quad(q: f64, p: usize, log_det: f64, dof: f64) -> f64 {
    let p = p as f64;
    ln_gamma_unchecked(0.5 * (dof + p)) - ln_gamma_unchecked(0.5 * dof) - 0.5 * log_det - 0.5 * p * (PI * dof).ln()
        - 0.5 * (dof + p) * (q / dof).ln_1p()
}

fn check_gamma(shape: f64, rate: f64) -> Result<()> {
    if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return domain(format!("gamma requires shape, rate > 0, got ({shape}, {rate})"));
    }
    Ok(())
}

/// Draw from Γ(shape, rate) (mean shape / rate).
pub fn gamma_sample<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    check_gamma(shape, rate)?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(g.sample(rng))
}

pub fn gamma_logpdf(v: f64, shape: f64, rate: f64) -> Result<f64> {
    check_gamma(shape, rate)?;
    if !(v > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(gamma_logpdf_unchecked(v, shape, rate))
}

pub(crate) fn gamma_logpdf_unchecked(v: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma_unchecked(shape) + (shape - 1.0) * v.ln() - rate * v
}

/// ln Γ_p(a), the multivariate gamma function.
pub fn ln_mvgamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    0.25 * pf * (pf - 1.0) * PI.ln() + (0..p).map(|j| ln_gamma_unchecked(a - 0.5 * j as f64)).sum::<f64>()
}

/// Draw X ~ IW(dof, scale) via the Bartlett decomposition of X^{-1}.
pub fn invwishart_sample<R: Rng + ?Sized>(dof: f64, scale: &SpdMatrix, rng: &mut R) -> Result<SpdMatrix> {
    let p = scale.dim();
    if !(dof > p as f64 - 1.0) {
        return domain(format!("inverse Wishart sampling needs dof > p - 1 = {}, got {dof}", p - 1));
    }
    // A lower triangular with A A' ~ W(dof, I)
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let half_dof = 0.5 * (dof - i as f64);
        let chi2 = 2.0 * Gamma::new(half_dof, 1.0).map_err(|e| Error::Domain(e.to_string()))?.sample(rng);
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    // inverse of the lower-triangular A
    let mut a_inv = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        a_inv[(j, j)] = 1.0 / a[(j, j)];
        for i in (j + 1)..p {
            let s: f64 = (j..i).map(|k| a[(i, k)] * a_inv[(k, j)]).sum();
            a_inv[(i, j)] = -s / a[(i, i)];
        }
    }
    // X = L (A A')^{-1} L' = B B' with B = L A^{-T}
    let b = scale.chol() * a_inv.transpose();
    SpdMatrix::from_symmetrized(&b * b.transpose())
}

/// Log inverse-Wishart density. With `scale = None` (Λ = 0), or whenever the
/// parameters do not define a proper distribution, the log of the
/// unnormalized kernel -(dof+p+1)/2 ln|X| - ½ tr(Λ X^{-1}) is returned.
pub fn invwishart_logpdf(x: &SpdMatrix, dof: f64, scale: Option<&SpdMatrix>) -> Result<f64> {
    let p = x.dim();
    let pf = p as f64;
    let kernel_det = -0.5 * (dof + pf + 1.0) * x.log_det();
    let Some(scale) = scale else {
        return Ok(kernel_det);
    };
    check_dims("invwishart_logpdf", p, scale.dim())?;
    let x_inv = x.inverse();
    let trace: f64 = x_inv.iter().zip(scale.matrix().iter()).map(|(a, b)| a * b).sum();
    let kernel = kernel_det - 0.5 * trace;
    if dof > pf - 1.0 {
        Ok(kernel + 0.5 * dof * scale.log_det() - 0.5 * dof * pf * LN_2 - ln_mvgamma(p, 0.5 * dof))
    } else {
        Ok(kernel)
    }
}

/// Exact draw from N(mean, var) restricted to (0, ∞).
///
/// Naive rejection while the truncation point sits at most 0.45 standard
/// deviations above the mean, otherwise an exponential proposal with the
/// optimal rate (Robert, 1995).
pub fn truncnorm_sample_positive<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
        return domain(format!("truncated normal requires finite mean and var > 0, got ({mean}, {var})"));
    }
    let sd = var.sqrt();
    let lower = -mean / sd;
    let z = if lower <= 0.45 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z > lower {
                break z;
            }
        }
    } else {
        let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
        loop {
            let e: f64 = Exp1.sample(rng);
            let z = lower + e / rate;
            let u: f64 = rng.random();
            if u <= (-0.5 * (z - rate) * (z - rate)).exp() {
                break z;
            }
        }
    };
    Ok((mean + sd * z).max(f64::MIN_POSITIVE))
}

/// Log density of N(mean, var) truncated to (0, ∞), evaluated at `x`.
pub fn truncnorm_logpdf_positive(x: f64, mean: f64, var: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    let sd = var.sqrt();
    let u = (x - mean) / sd;
    -LN_SQRT_2PI - sd.ln() - 0.5 * u * u - ln_normal_cdf(mean / sd)
}

/// Log density of the multivariate skew-normal 2 φ_p(y; loc, Σ) Φ(α' ω^{-1} (y - loc)).
pub fn sn_logpdf(y: &DVector<f64>, loc: &DVector<f64>, alpha: &DVector<f64>, scale: &SpdMatrix) -> Result<f64> {
    check_dims("sn_logpdf", y.len(), alpha.len())?;
    let base = mvn_logpdf(y, loc, scale)?;
    let arg: f64 = (0..y.len())
        .map(|j| alpha[j] * (y[j] - loc[j]) / scale.matrix()[(j, j)].sqrt())
        .sum();
    Ok(LN_2 + base + ln_normal_cdf(arg))
}
