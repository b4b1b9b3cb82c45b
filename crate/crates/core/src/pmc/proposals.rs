//! Conditional proposals for one particle, drawn in the order
//! (ν, v, z, ξ, ψ, G), each given the most recent values of the others.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distributions::{
    gamma_logpdf_unchecked, gamma_sample, invwishart_logpdf, invwishart_sample, mvn_logpdf, mvn_sample,
    truncnorm_logpdf_positive, truncnorm_sample_positive,
};
use crate::error::{Error, Result};
use crate::likelihood::{Dataset, LatentState};
use crate::linalg::SpdMatrix;
use crate::model::{ModelSpec, PreconditionError, ThetaParams};
use crate::specfun::ln_gamma_unchecked;

use super::vcond::{envelope, sample_v, VCondCoeffs};

/// G^{-1} and the ψ-dependent pieces used by the latent proposals.
struct ScaleInverse {
    p: usize,
    inv: DMatrix<f64>,
    ginv_psi: Vec<f64>,
    psi_quad: f64,
}

impl ScaleInverse {
    fn new(theta: &ThetaParams) -> Self {
        let inv = theta.g.inverse();
        let ginv_psi = theta.g.solve(theta.psi.as_slice());
        let psi_quad = ginv_psi.iter().zip(theta.psi.iter()).map(|(a, b)| a * b).sum();
        Self { p: theta.dim(), inv, ginv_psi, psi_quad }
    }

    fn quad(&self, e: &[f64]) -> f64 {
        let mut s = 0.0;
        for r in 0..self.p {
            let mut row = 0.0;
            for c in 0..self.p {
                row += self.inv[(r, c)] * e[c];
            }
            s += e[r] * row;
        }
        s
    }

    fn cross(&self, e: &[f64]) -> f64 {
        e.iter().zip(&self.ginv_psi).map(|(a, b)| a * b).sum()
    }
}

fn centered(y: &[f64], xi: &DVector<f64>) -> Vec<f64> {
    y.iter().zip(xi.iter()).map(|(a, b)| a - b).collect()
}

/// Draw ν from its discrete full conditional on the grid,
///
/// ```text
/// ln π(ν | v) = n[(ν/2) ln(ν/2) − ln Γ(ν/2)] + (ν/2 − 1) Σ ln v_i − (ν/2) Σ v_i + const.
/// ```
///
/// Returns the draw and its log probability.
pub fn propose_nu<R: Rng + ?Sized>(v: &[f64], grid: &[f64], rng: &mut R) -> Result<(f64, f64)> {
    let logp = nu_log_pmf(v, grid)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = grid.len() - 1;
    for (k, lp) in logp.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            pick = k;
            break;
        }
    }
    Ok((grid[pick], logp[pick]))
}

/// Normalized log probabilities of the ν full conditional over `grid`.
pub fn nu_log_pmf(v: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Domain("ν grid is empty".into()));
    }
    let n = v.len() as f64;
    let sum_ln_v: f64 = v.iter().map(|x| x.ln()).sum();
    let sum_v: f64 = v.iter().sum();
    let raw: Vec<f64> = grid
        .iter()
        .map(|&nu| {
            let h = 0.5 * nu;
            n * (h * h.ln() - ln_gamma_unchecked(h)) + (h - 1.0) * sum_ln_v - h * sum_v
        })
        .collect();
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric("ν full conditional is not finite".into()));
    }
    let lse = max + raw.iter().map(|r| (r - max).exp()).sum::<f64>().ln();
    Ok(raw.into_iter().map(|r| r - lse).collect())
}

/// Draw every v_i from its full conditional. Returns the draws, the summed
/// log density and the rejection-sampler trial count.
pub fn propose_v<R: Rng + ?Sized>(
    theta: &ThetaParams,
    z: &[f64],
    data: &Dataset,
    rng: &mut R,
) -> Result<(Vec<f64>, f64, usize)> {
    let inv = ScaleInverse::new(theta);
    let c = 0.5 * (theta.nu + data.p() as f64);
    let mut v = Vec::with_capacity(data.n());
    let mut log_q = 0.0;
    let mut trials = 0;
    for (i, y) in data.rows().enumerate() {
        let e = centered(y, &theta.xi);
        let a = 0.5 * (theta.nu + inv.quad(&e));
        let b = -z[i].abs() * inv.cross(&e);
        if b == 0.0 {
            let draw = gamma_sample(c, a, rng)?;
            log_q += gamma_logpdf_unchecked(draw, c, a);
            trials += 1;
            v.push(draw);
        } else {
            let coeffs = VCondCoeffs::new(a, b, c)?;
            let env = envelope(&coeffs)?;
            let draw = sample_v(&coeffs, &env, rng)?;
            log_q += draw.log_density;
            trials += draw.trials;
            v.push(draw.v);
        }
    }
    Ok((v, log_q, trials))
}

/// Parameters (m_i, v_θ) of the z_i full conditional:
/// v_θ = (1 + ψ'G^{-1}ψ)^{-1}, m_i = v_θ √v_i ψ'G^{-1}(y_i − ξ).
pub fn zcond_params(theta: &ThetaParams, v_i: f64, y_i: &[f64]) -> Result<(f64, f64)> {
    if y_i.len() != theta.dim() {
        return Err(Error::Matrix(format!("observation has length {}, parameters {}", y_i.len(), theta.dim())));
    }
    let inv = ScaleInverse::new(theta);
    let v_theta = 1.0 / (1.0 + inv.psi_quad);
    Ok((v_theta * v_i.sqrt() * inv.cross(&centered(y_i, &theta.xi)), v_theta))
}

/// z_i = S_i Z_i⁺ with Z_i⁺ ~ N(m_i, v_θ) truncated to (0, ∞) and S_i a fair
/// sign. The log density of each draw is ln ½ + ln TN(|z_i|).
pub fn propose_z<R: Rng + ?Sized>(
    theta: &ThetaParams,
    v: &[f64],
    data: &Dataset,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let inv = ScaleInverse::new(theta);
    let v_theta = 1.0 / (1.0 + inv.psi_quad);
    let mut z = Vec::with_capacity(data.n());
    let mut log_q = 0.0;
    for (i, y) in data.rows().enumerate() {
        let m = v_theta * v[i].sqrt() * inv.cross(&centered(y, &theta.xi));
        let mag = truncnorm_sample_positive(m, v_theta, rng)?;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        log_q += -LN_2 + truncnorm_logpdf_positive(mag, m, v_theta);
        z.push(sign * mag);
    }
    Ok((z, log_q))
}

fn scaled(g: &SpdMatrix, factor: f64) -> Result<SpdMatrix> {
    SpdMatrix::new(g.matrix() * factor)
}

/// ξ ~ N_p((Σv_i y_i − ψ Σ√v_i |z_i|) / Σv_i, G / Σv_i).
pub fn propose_xi<R: Rng + ?Sized>(
    theta: &ThetaParams,
    lat: &LatentState,
    data: &Dataset,
    rng: &mut R,
) -> Result<(DVector<f64>, f64)> {
    let p = data.p();
    let mut s_v = 0.0;
    let mut s_a = 0.0;
    let mut vy = DVector::<f64>::zeros(p);
    for (i, y) in data.rows().enumerate() {
        let v = lat.v[i];
        s_v += v;
        s_a += v.sqrt() * lat.z[i].abs();
        for j in 0..p {
            vy[j] += v * y[j];
        }
    }
    if !(s_v > 0.0) {
        return Err(Error::DegenerateLatents("Σv is not positive".into()));
    }
    let mean = (vy - &theta.psi * s_a) / s_v;
    let cov = scaled(&theta.g, 1.0 / s_v)?;
    let draw = mvn_sample(&mean, &cov, rng)?;
    let log_q = mvn_logpdf(&draw, &mean, &cov)?;
    Ok((draw, log_q))
}

/// ψ ~ N_p(Σ|z_i|√v_i (y_i − ξ) / Σz_i², G / Σz_i²). The draw is kept even
/// when it leaves the admissible region; the prior then zeroes its weight.
pub fn propose_psi<R: Rng + ?Sized>(
    theta: &ThetaParams,
    lat: &LatentState,
    data: &Dataset,
    rng: &mut R,
) -> Result<(DVector<f64>, f64)> {
    let p = data.p();
    let mut s_zz = 0.0;
    let mut num = DVector::<f64>::zeros(p);
    for (i, y) in data.rows().enumerate() {
        let w = lat.z[i].abs() * lat.v[i].sqrt();
        s_zz += lat.z[i] * lat.z[i];
        for j in 0..p {
            num[j] += w * (y[j] - theta.xi[j]);
        }
    }
    if !(s_zz > 0.0) {
        return Err(Error::DegenerateLatents("Σz² is zero".into()));
    }
    let mean = num / s_zz;
    let cov = scaled(&theta.g, 1.0 / s_zz)?;
    let draw = mvn_sample(&mean, &cov, rng)?;
    let log_q = mvn_logpdf(&draw, &mean, &cov)?;
    Ok((draw, log_q))
}

/// G ~ IW(n − p − 1, Σ v_i ε_i ε_i') with ε_i = y_i − ξ − ψ|z_i|/√v_i.
pub fn propose_g<R: Rng + ?Sized>(
    theta: &ThetaParams,
    lat: &LatentState,
    data: &Dataset,
    rng: &mut R,
) -> Result<(SpdMatrix, f64)> {
    let (n, p) = (data.n(), data.p());
    if n <= 2 * p {
        return Err(PreconditionError::InsufficientForScaleProposal { n, p }.into());
    }
    let mut lambda = DMatrix::<f64>::zeros(p, p);
    let mut e = vec![0.0; p];
    for (i, y) in data.rows().enumerate() {
        let v = lat.v[i];
        let s = lat.z[i].abs() / v.sqrt();
        for j in 0..p {
            e[j] = y[j] - theta.xi[j] - theta.psi[j] * s;
        }
        for r in 0..p {
            for c in 0..=r {
                lambda[(r, c)] += v * e[r] * e[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            lambda[(c, r)] = lambda[(r, c)];
        }
    }
    let lambda = SpdMatrix::new(lambda)?;
    let dof = (n - p - 1) as f64;
    let draw = invwishart_sample(dof, &lambda, rng)?;
    let log_q = invwishart_logpdf(&draw, dof, Some(&lambda))?;
    Ok((draw, log_q))
}

/// One particle's proposal: new parameters and latents with the summed log
/// proposal density.
#[derive(Debug, Clone)]
pub struct ProposedParticle {
    pub theta: ThetaParams,
    pub lat: LatentState,
    pub log_proposal: f64,
    pub v_trials: usize,
    pub v_draws: usize,
}

/// Propose every free component of `spec` in turn, starting from `theta` and
/// `lat`.
pub fn propose_particle<R: Rng + ?Sized>(
    theta: &ThetaParams,
    lat: &LatentState,
    data: &Dataset,
    spec: ModelSpec,
    nu_grid: &[f64],
    rng: &mut R,
) -> Result<ProposedParticle> {
    let mut theta = theta.clone();
    let mut lat = lat.clone();
    let mut log_q = 0.0;
    let mut v_trials = 0;
    let mut v_draws = 0;
    if spec.heavy_tailed {
        let (nu, lq) = propose_nu(&lat.v, nu_grid, rng)?;
        theta.nu = nu;
        log_q += lq;
        let (v, lq, trials) = propose_v(&theta, &lat.z, data, rng)?;
        lat.v = v;
        log_q += lq;
        v_trials = trials;
        v_draws = data.n();
    }
    if spec.skewed {
        let (z, lq) = propose_z(&theta, &lat.v, data, rng)?;
        lat.z = z;
        log_q += lq;
    }
    let (xi, lq) = propose_xi(&theta, &lat, data, rng)?;
    theta.xi = xi;
    log_q += lq;
    if spec.skewed {
        let (psi, lq) = propose_psi(&theta, &lat, data, rng)?;
        theta.psi = psi;
        log_q += lq;
    }
    let (g, lq) = propose_g(&theta, &lat, data, rng)?;
    theta.g = g;
    log_q += lq;
    Ok(ProposedParticle { theta, lat, log_proposal: log_q, v_trials, v_draws })
}
