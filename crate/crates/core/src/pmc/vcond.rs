//! The full conditional of a latent scale v_i,
//!
//! ```text
//! π(v | ·) = k_v^{-1} v^{C-1} exp(-A v - B √v),
//! ```
//!
//! its normalizing constant and an exact rejection sampler whose instrumental
//! law is the square of a Γ(2C, β) variable.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::ThetaParams;
use crate::quad::{integrate, integrate_to_infinity};
use crate::specfun::{ln_gamma_unchecked, scaled_pcd, PcdRoute};

/// Coefficients (A, B, C) of the v_i full conditional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VCondCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl VCondCoeffs {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && c > 0.0) || !a.is_finite() || !b.is_finite() || !c.is_finite() {
            return Err(Error::Domain(format!("v conditional needs A > 0, C > 0 and finite B, got ({a}, {b}, {c})")));
        }
        Ok(Self { a, b, c })
    }
}

/// A_i = ½(ν + e'G^{-1}e), B_i = −|z_i| e'G^{-1}ψ, C = (ν+p)/2 with e = y_i − ξ.
pub fn vcond_coeffs(theta: &ThetaParams, z_i: f64, y_i: &[f64]) -> Result<VCondCoeffs> {
    let p = theta.dim();
    if y_i.len() != p {
        return Err(Error::Matrix(format!("observation has length {}, parameters {p}", y_i.len())));
    }
    let e: Vec<f64> = (0..p).map(|j| y_i[j] - theta.xi[j]).collect();
    let ginv_psi = theta.g.solve(theta.psi.as_slice());
    let quad = theta.g.inv_quad_form(&e);
    let cross: f64 = e.iter().zip(&ginv_psi).map(|(a, b)| a * b).sum();
    VCondCoeffs::new(0.5 * (theta.nu + quad), -z_i.abs() * cross, 0.5 * (theta.nu + p as f64))
}

/// Unnormalized log density (C−1) ln v − A v − B √v.
pub fn vcond_log_kernel(v: f64, c: &VCondCoeffs) -> f64 {
    if !(v > 0.0) {
        return f64::NEG_INFINITY;
    }
    (c.c - 1.0) * v.ln() - c.a * v - c.b * v.sqrt()
}

/// KL-optimal rate of the instrumental Γ(2C, β) root law,
/// β* = ½(B + √(B² + 8A(2C+1))).
pub fn beta_star(c: &VCondCoeffs) -> f64 {
    let disc = c.b * c.b + 8.0 * c.a * (2.0 * c.c + 1.0);
    if c.b >= 0.0 {
        0.5 * (c.b + disc.sqrt())
    } else {
        // same root, written without cancellation
        4.0 * c.a * (2.0 * c.c + 1.0) / (disc.sqrt() - c.b)
    }
}

/// KL divergence from the instrumental density f(·|2C, β) to the target,
///
/// ```text
/// ln k_v + 2C ln β − ln 2 − ln Γ(2C) + 2C(2C+1) A / β² + 2C B / β − 2C.
/// ```
pub fn kl_divergence(c: &VCondCoeffs, beta: f64, log_kv: f64) -> f64 {
    let a2 = 2.0 * c.c;
    log_kv + a2 * beta.ln() - LN_2 - ln_gamma_unchecked(a2) + a2 * (a2 + 1.0) * c.a / (beta * beta) + a2 * c.b / beta - a2
}

/// How ln k_v was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KvRoute {
    /// B = 0: Γ(C) / A^C.
    Gamma,
    /// Parabolic cylinder function via the given route.
    ParabolicCylinder(PcdRoute),
    /// Adaptive quadrature fallback.
    Quadrature,
}

/// ln k_v with k_v = ∫₀^∞ v^{C−1} e^{−Av−B√v} dv.
pub fn kv_constant(c: &VCondCoeffs) -> Result<f64> {
    kv_constant_with_route(c).map(|(v, _)| v)
}

/// As [`kv_constant`], also reporting the evaluation route.
///
/// k_v = 2 (2A)^{−C} Γ(2C) e^{B²/8A} D_{−2C}(B/√(2A)). When the parabolic
/// cylinder evaluation does not converge the integral is computed by
/// quadrature instead.
pub fn kv_constant_with_route(c: &VCondCoeffs) -> Result<(f64, KvRoute)> {
    if c.b == 0.0 {
        return Ok((ln_gamma_unchecked(c.c) - c.c * c.a.ln(), KvRoute::Gamma));
    }
    let z = c.b / (2.0 * c.a).sqrt();
    let e = scaled_pcd(-2.0 * c.c, z);
    if e.converged && e.sign > 0.0 && e.ln_abs.is_finite() {
        let ln_k = LN_2 - c.c * (2.0 * c.a).ln() + ln_gamma_unchecked(2.0 * c.c) + e.ln_abs;
        return Ok((ln_k, KvRoute::ParabolicCylinder(e.route)));
    }
    Ok((kv_quadrature(c)?, KvRoute::Quadrature))
}

/// ln k_v by adaptive Gauss–Kronrod quadrature of 2∫₀^∞ x^{2C−1} e^{−Ax²−Bx} dx,
/// scaled by the integrand's peak and split there.
pub fn kv_quadrature(c: &VCondCoeffs) -> Result<f64> {
    const REL_TOL: f64 = 1e-13;
    let (a, b, cc) = (c.a, c.b, c.c);
    if cc > 0.5 {
        let k = 2.0 * cc - 1.0;
        let mode = (-b + (b * b + 4.0 * a * 2.0 * k).sqrt()) / (4.0 * a);
        let h = |x: f64| if x > 0.0 { k * x.ln() - a * x * x - b * x } else { f64::NEG_INFINITY };
        let peak = h(mode);
        let width = 1.0 / (k / (mode * mode) + 2.0 * a).sqrt();
        let f = |x: f64| (h(x) - peak).exp();
        let (left, _) = integrate(f, 0.0, mode, 0.0, REL_TOL)?;
        let (right, _) = integrate_to_infinity(f, mode, width, 0.0, REL_TOL)?;
        Ok(LN_2 + peak + (left + right).ln())
    } else {
        // u = x^{2C}: k = (1/C) ∫₀^∞ exp(−A u^{1/C} − B u^{1/(2C)}) du
        let x_peak = (-b / (2.0 * a)).max(0.0);
        let peak = -a * x_peak * x_peak - b * x_peak;
        let g = |u: f64| {
            let x = u.powf(0.5 / cc);
            (-a * x * x - b * x - peak).exp()
        };
        let u_peak = x_peak.powf(2.0 * cc);
        let width = (1.0 / a.sqrt()).powf(2.0 * cc).max(u_peak);
        let (left, _) = integrate(g, 0.0, u_peak, 0.0, REL_TOL)?;
        let (right, _) = integrate_to_infinity(g, u_peak, width, 0.0, REL_TOL)?;
        Ok(peak + (left + right).ln() - cc.ln())
    }
}

/// Envelope π(v) ≤ M f(v | α_v, β_v) for the rejection sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionEnvelope {
    /// α_v* = 2C.
    pub alpha_v: f64,
    /// β_v*.
    pub beta_v: f64,
    /// M.
    pub bound: f64,
    pub log_bound: f64,
    pub log_kv: f64,
    /// √v at which π/f peaks: (β−B)/(2A).
    pub root_mode: f64,
    pub route: KvRoute,
}

impl RejectionEnvelope {
    /// v* = ((β*−B)/(2A))².
    pub fn v_star(&self) -> f64 {
        self.root_mode * self.root_mode
    }
}

/// Log density of W = R² with R ~ Γ(α, β):
/// f(w) = β^α / (2Γ(α)) w^{α/2−1} e^{−β√w}.
pub fn instrumental_logpdf(w: f64, alpha: f64, beta: f64) -> f64 {
    if !(w > 0.0) {
        return f64::NEG_INFINITY;
    }
    alpha * beta.ln() - LN_2 - ln_gamma_unchecked(alpha) + (0.5 * alpha - 1.0) * w.ln() - beta * w.sqrt()
}

pub fn envelope(c: &VCondCoeffs) -> Result<RejectionEnvelope> {
    let (log_kv, route) = kv_constant_with_route(c)?;
    Ok(envelope_with_kv(c, log_kv, route))
}

pub(crate) fn envelope_with_kv(c: &VCondCoeffs, log_kv: f64, route: KvRoute) -> RejectionEnvelope {
    let alpha_v = 2.0 * c.c;
    let beta_v = beta_star(c);
    let gap = beta_v - c.b;
    let log_bound = LN_2 + ln_gamma_unchecked(alpha_v) - log_kv - alpha_v * beta_v.ln() + gap * gap / (4.0 * c.a);
    debug_assert!(log_bound > -1e-9, "rejection envelope below target: ln M = {log_bound}");
    RejectionEnvelope {
        alpha_v,
        beta_v,
        bound: log_bound.exp(),
        log_bound,
        log_kv,
        root_mode: gap / (2.0 * c.a),
        route,
    }
}

/// Trials after which the rejection sampler gives up.
pub const MAX_REJECTION_TRIALS: usize = 1_000_000;

/// One exact draw from π(v | ·).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VDraw {
    pub v: f64,
    /// ln π(v | ·), normalized by k_v.
    pub log_density: f64,
    pub trials: usize,
}

/// Draw R ~ Γ(2C, β*), accept W = R² with probability exp(−A(R − s*)²).
pub fn sample_v<R: Rng + ?Sized>(c: &VCondCoeffs, env: &RejectionEnvelope, rng: &mut R) -> Result<VDraw> {
    let gamma = Gamma::new(env.alpha_v, 1.0 / env.beta_v).map_err(|e| Error::Domain(e.to_string()))?;
    for trial in 1..=MAX_REJECTION_TRIALS {
        let r: f64 = gamma.sample(rng);
        let d = r - env.root_mode;
        let u: f64 = rng.random();
        if r > 0.0 && u.ln() <= -c.a * d * d {
            let v = r * r;
            return Ok(VDraw { v, log_density: vcond_log_kernel(v, c) - env.log_kv, trials: trial });
        }
    }
    Err(Error::Numeric(format!(
        "v rejection sampler failed after {MAX_REJECTION_TRIALS} trials (A = {}, B = {}, C = {})",
        c.a, c.b, c.c
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn beta_star_closed_form() {
        let c = VCondCoeffs::new(1.0, 0.0, 1.0).unwrap();
        assert!((beta_star(&c) - 6f64.sqrt()).abs() < 1e-15);
        let neg = VCondCoeffs::new(0.5, -10.0, 3.0).unwrap();
        let b = beta_star(&neg);
        let direct = 0.5 * (-10.0 + (100.0f64 + 4.0 * 7.0).sqrt());
        assert!(b > 0.0 && (b - direct).abs() < 1e-13);
    }

    #[test]
    fn kv_gamma_cases() {
        let c = VCondCoeffs::new(1.0, 0.0, 2.0).unwrap();
        assert!(kv_constant(&c).unwrap().abs() < 1e-15);
        let c = VCondCoeffs::new(2.0, 0.0, 1.5).unwrap();
        let expect = ln_gamma_unchecked(1.5) - 1.5 * 2f64.ln();
        assert!((kv_constant(&c).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn kv_routes_agree_with_quadrature() {
        for &(a, b, cc) in &[(1.0, 2.0, 3.0), (1.0, -2.0, 3.0), (0.5, 5.0, 6.0), (5.0, -5.0, 2.5), (0.5, 5.0, 2.5)] {
            let c = VCondCoeffs::new(a, b, cc).unwrap();
            let (closed, _) = kv_constant_with_route(&c).unwrap();
            let quad = kv_quadrature(&c).unwrap();
            assert!((closed - quad).abs() < 1e-10 * quad.abs().max(1.0), "({a},{b},{cc}): {closed} vs {quad}");
        }
    }

    #[test]
    fn small_shape_quadrature_branch() {
        // C = 0.25, B = 0: Γ(C)/A^C
        let c = VCondCoeffs { a: 2.0, b: 0.0, c: 0.25 };
        let expect = ln_gamma_unchecked(0.25) - 0.25 * 2f64.ln();
        assert!((kv_quadrature(&c).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn envelope_mode_and_bound() {
        let c = VCondCoeffs::new(1.0, 0.0, 1.0).unwrap();
        let env = envelope(&c).unwrap();
        assert!((env.v_star() - 1.5).abs() < 1e-14);
        assert!(env.bound >= 1.0);
    }

    #[test]
    fn sample_v_is_positive_and_reproducible() {
        let c = VCondCoeffs::new(1.3, 2.0, 2.5).unwrap();
        let env = envelope(&c).unwrap();
        let a = sample_v(&c, &env, &mut RngStream::new(9, 1).rng()).unwrap();
        let b = sample_v(&c, &env, &mut RngStream::new(9, 1).rng()).unwrap();
        assert_eq!(a, b);
        assert!(a.v > 0.0 && a.log_density.is_finite());
    }
}
