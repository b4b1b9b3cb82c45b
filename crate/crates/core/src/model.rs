//! Parameterizations of the skew-t family, the admissible region for δ,
//! prior densities and the selector for the nested models.
//!
//! Three coordinate systems are used:
//! * [`AlphaParams`]: (ξ, α, Σ, ν), the density parameterization;
//! * [`DeltaParams`]: (ξ, δ, Σ, ν), in which the prior is stated;
//! * [`ThetaParams`]: (ξ, ψ, G, ν) with ψ = ωδ and G = Σ − ψψ', in which the
//!   sampler works.
//!
//! Gaussian-limit models carry `nu = f64::INFINITY`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::invwishart_logpdf;
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::specfun::ln_gamma_unchecked;

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaParams {
    pub xi: DVector<f64>,
    pub alpha: DVector<f64>,
    pub sigma: SpdMatrix,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaParams {
    pub xi: DVector<f64>,
    pub delta: DVector<f64>,
    pub sigma: SpdMatrix,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaParams {
    pub xi: DVector<f64>,
    pub psi: DVector<f64>,
    pub g: SpdMatrix,
    pub nu: f64,
}

/// Which member of the family is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelSpec {
    pub skewed: bool,
    pub heavy_tailed: bool,
}

impl ModelSpec {
    pub const NORMAL: ModelSpec = ModelSpec { skewed: false, heavy_tailed: false };
    pub const STUDENT_T: ModelSpec = ModelSpec { skewed: false, heavy_tailed: true };
    pub const SKEW_NORMAL: ModelSpec = ModelSpec { skewed: true, heavy_tailed: false };
    pub const SKEW_T: ModelSpec = ModelSpec { skewed: true, heavy_tailed: true };

    /// The four models in reporting order.
    pub const ALL: [ModelSpec; 4] = [Self::SKEW_T, Self::STUDENT_T, Self::SKEW_NORMAL, Self::NORMAL];

    /// Position in [`ModelSpec::ALL`].
    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|m| m == self).expect("every spec is listed")
    }

    pub fn name(&self) -> &'static str {
        match (self.skewed, self.heavy_tailed) {
            (false, false) => "N",
            (false, true) => "t",
            (true, false) => "SN",
            (true, true) => "ST",
        }
    }

    /// Accepts the short names (N, t, SN, ST) and a few long forms.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "n" | "normal" => Ok(Self::NORMAL),
            "t" | "student-t" | "student_t" => Ok(Self::STUDENT_T),
            "sn" | "skew-normal" | "skew_normal" => Ok(Self::SKEW_NORMAL),
            "st" | "skew-t" | "skew_t" => Ok(Self::SKEW_T),
            other => Err(Error::Config(format!("unknown model '{other}' (expected N, t, SN or ST)"))),
        }
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::SKEW_T
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::from_name(&s)
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.name().to_string()
    }
}

pub const DEFAULT_NU_GRID: [f64; 20] = [
    1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 12.0, 14.0, 17.0, 20.0, 25.0, 30.0, 40.0, 55.0, 75.0, 100.0,
];

/// Prior hyperparameters: IW(m, Λ) on Σ (`iw_scale = None` means Λ = 0) and
/// a uniform prior on `nu_grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub iw_dof: f64,
    pub iw_scale: Option<SpdMatrix>,
    pub nu_grid: Vec<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { iw_dof: 0.0, iw_scale: None, nu_grid: DEFAULT_NU_GRID.to_vec() }
    }
}

impl PriorConfig {
    /// Grid must be non-empty, positive, finite and strictly increasing.
    pub fn validate(&self) -> Result<()> {
        if self.nu_grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("nu_grid values must be finite and positive".into()));
        }
        if self.nu_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("nu_grid must be strictly increasing".into()));
        }
        if !self.iw_dof.is_finite() {
            return Err(Error::Config("iw_dof must be finite".into()));
        }
        Ok(())
    }

    pub fn grid_index(&self, nu: f64) -> Option<usize> {
        self.nu_grid.iter().position(|g| (g - nu).abs() <= 1e-12 * g.abs().max(1.0))
    }
}

/// A failed posterior-propriety condition.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PreconditionError {
    #[error("n ≥ p+1 violated (n = {n}, p = {p})")]
    InsufficientSample { n: usize, p: usize },
    #[error("improper ν prior: the ν grid must be finite and non-empty")]
    ImproperNuPrior,
    #[error("n > 2p violated (n = {n}, p = {p}); the G proposal needs n - p - 1 > p - 1")]
    InsufficientForScaleProposal { n: usize, p: usize },
}

/// Conditions under which the posterior is proper.
pub fn validate_posterior_preconditions(
    n: usize,
    p: usize,
    cfg: &PriorConfig,
) -> std::result::Result<(), PreconditionError> {
    if n < p + 1 {
        return Err(PreconditionError::InsufficientSample { n, p });
    }
    if cfg.nu_grid.is_empty() || cfg.nu_grid.iter().any(|v| !v.is_finite()) {
        return Err(PreconditionError::ImproperNuPrior);
    }
    Ok(())
}

/// ω = diag(√Σ_jj) as a vector.
pub fn omega(sigma: &SpdMatrix) -> Vec<f64> {
    sigma.diag().iter().map(|d| d.sqrt()).collect()
}

/// Ω = ω^{-1} Σ ω^{-1}.
pub fn correlation(sigma: &SpdMatrix) -> Result<SpdMatrix> {
    let w = omega(sigma);
    let m = sigma.matrix();
    let p = sigma.dim();
    let mut c = DMatrix::from_fn(p, p, |i, j| m[(i, j)] / (w[i] * w[j]));
    for i in 0..p {
        c[(i, i)] = 1.0;
    }
    SpdMatrix::from_symmetrized(c)
}

fn check_len(what: &str, v: usize, p: usize) -> Result<()> {
    if v != p {
        return Err(Error::Matrix(format!("{what}: length {v} does not match dimension {p}")));
    }
    Ok(())
}

/// δ = Ωα / √(1 + α'Ωα).
pub fn delta_from_alpha(alpha: &DVector<f64>, omega_corr: &SpdMatrix) -> Result<DVector<f64>> {
    check_len("delta_from_alpha", alpha.len(), omega_corr.dim())?;
    let oa = omega_corr.matrix() * alpha;
    let q = alpha.dot(&oa);
    Ok(oa / (1.0 + q).sqrt())
}

/// α = Ω^{-1}δ / √(1 − δ'Ω^{-1}δ).
pub fn alpha_from_delta(delta: &DVector<f64>, omega_corr: &SpdMatrix) -> Result<DVector<f64>> {
    check_len("alpha_from_delta", delta.len(), omega_corr.dim())?;
    let s = omega_corr.solve(delta.as_slice());
    let q: f64 = s.iter().zip(delta.iter()).map(|(a, b)| a * b).sum();
    if !(q < 1.0) {
        return Err(Error::Constraint(format!("δ'Ω^{{-1}}δ = {q} is not below 1")));
    }
    let scale = 1.0 / (1.0 - q).sqrt();
    Ok(DVector::from_iterator(s.len(), s.into_iter().map(|v| v * scale)))
}

/// ψ = ωδ, G = Σ − ψψ'.
pub fn theta_from_delta(dp: &DeltaParams) -> Result<ThetaParams> {
    let p = dp.sigma.dim();
    check_len("theta_from_delta", dp.delta.len(), p)?;
    check_len("theta_from_delta", dp.xi.len(), p)?;
    let w = omega(&dp.sigma);
    let psi = DVector::from_fn(p, |j, _| w[j] * dp.delta[j]);
    let g = dp.sigma.matrix() - &psi * psi.transpose();
    let g = SpdMatrix::from_symmetrized(g)
        .map_err(|_| Error::Constraint("Σ − ψψ' is not positive definite (δ outside its ellipsoid)".into()))?;
    Ok(ThetaParams { xi: dp.xi.clone(), psi, g, nu: dp.nu })
}

/// Σ = G + ψψ', δ = ω^{-1}ψ.
pub fn delta_from_theta(tp: &ThetaParams) -> Result<DeltaParams> {
    let p = tp.g.dim();
    check_len("delta_from_theta", tp.psi.len(), p)?;
    let sigma = SpdMatrix::from_symmetrized(tp.g.matrix() + &tp.psi * tp.psi.transpose())?;
    let w = omega(&sigma);
    let delta = DVector::from_fn(p, |j, _| tp.psi[j] / w[j]);
    Ok(DeltaParams { xi: tp.xi.clone(), delta, sigma, nu: tp.nu })
}

impl AlphaParams {
    pub fn to_delta(&self) -> Result<DeltaParams> {
        let delta = delta_from_alpha(&self.alpha, &correlation(&self.sigma)?)?;
        Ok(DeltaParams { xi: self.xi.clone(), delta, sigma: self.sigma.clone(), nu: self.nu })
    }
}

impl DeltaParams {
    pub fn to_alpha(&self) -> Result<AlphaParams> {
        let alpha = alpha_from_delta(&self.delta, &correlation(&self.sigma)?)?;
        Ok(AlphaParams { xi: self.xi.clone(), alpha, sigma: self.sigma.clone(), nu: self.nu })
    }
}

impl ThetaParams {
    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn to_alpha(&self) -> Result<AlphaParams> {
        delta_from_theta(self)?.to_alpha()
    }
}

/// ln|J| = −½ Σ_j ln(G_jj + ψ_j²).
pub fn jacobian_logdet(tp: &ThetaParams) -> f64 {
    let g = tp.g.matrix();
    -0.5 * (0..tp.dim()).map(|j| (g[(j, j)] + tp.psi[j] * tp.psi[j]).ln()).sum::<f64>()
}

/// Log of the uniform density on {δ : δ'Ω^{-1}δ < 1}, or −∞ outside it.
pub fn log_prior_delta_given_sigma(delta: &DVector<f64>, sigma: &SpdMatrix) -> Result<f64> {
    let p = sigma.dim();
    check_len("log_prior_delta_given_sigma", delta.len(), p)?;
    let corr = correlation(sigma)?;
    if !(corr.inv_quad_form(delta.as_slice()) < 1.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(log_uniform_delta_density(p, corr.log_det()))
}

fn log_uniform_delta_density(p: usize, log_det_corr: f64) -> f64 {
    let pf = p as f64;
    ln_gamma_unchecked(0.5 * pf + 1.0) - 0.5 * pf * std::f64::consts::PI.ln() - 0.5 * log_det_corr
}

/// Log prior density of θ = (ξ, ψ, G, ν) under `spec`.
///
/// Flat on ξ, IW(m, Λ) on Σ = G + ψψ', uniform on Δ_Σ for δ and uniform on
/// the ν grid, carried to θ coordinates by the Jacobian. Returns −∞ when ν is
/// off the grid or Σ fails to factor.
pub fn log_prior(tp: &ThetaParams, spec: ModelSpec, cfg: &PriorConfig) -> f64 {
    let p = tp.dim();
    let mut total = 0.0;
    if spec.heavy_tailed {
        if cfg.grid_index(tp.nu).is_none() {
            return f64::NEG_INFINITY;
        }
        total -= (cfg.nu_grid.len() as f64).ln();
    }
    let sigma = if spec.skewed {
        match SpdMatrix::from_symmetrized(tp.g.matrix() + &tp.psi * tp.psi.transpose()) {
            Ok(s) => s,
            Err(_) => return f64::NEG_INFINITY,
        }
    } else {
        tp.g.clone()
    };
    match invwishart_logpdf(&sigma, cfg.iw_dof, cfg.iw_scale.as_ref()) {
        Ok(v) => total += v,
        Err(_) => return f64::NEG_INFINITY,
    }
    if spec.skewed {
        // δ'Ω^{-1}δ = q/(1+q) < 1 whenever G is SPD; |Ω| = |Σ| / Π Σ_jj
        let log_det_corr = sigma.log_det() - sigma.diag().iter().map(|d| d.ln()).sum::<f64>();
        total += log_uniform_delta_density(p, log_det_corr);
        total += jacobian_logdet(tp);
    }
    total
}

/// [`log_prior`] evaluated at δ-coordinates; −∞ when δ lies outside Δ_Σ.
pub fn log_prior_delta(dp: &DeltaParams, spec: ModelSpec, cfg: &PriorConfig) -> f64 {
    match theta_from_delta(dp) {
        Ok(tp) => log_prior(&tp, spec, cfg),
        Err(_) => f64::NEG_INFINITY,
    }
}
