//! Observed-data and augmented log-likelihoods, complete-data ML estimates
//! and the ν-equation.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use crate::distributions::mvt_logpdf_from_quad;
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::model::{delta_from_theta, AlphaParams, ModelSpec, ThetaParams};
use crate::specfun::{digamma_unchecked, ln_gamma_unchecked, ln_normal_cdf, ln_student_t_cdf_unchecked, LN_SQRT_2PI};

/// n observations of dimension p, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    p: usize,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Domain("dataset has no rows".into()));
        }
        let p = rows[0].len();
        if p == 0 {
            return Err(Error::Domain("dataset has no columns".into()));
        }
        let mut values = Vec::with_capacity(n * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Domain(format!("row {i} has {} values, expected {p}", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("row {i} has a non-finite value")));
            }
            values.extend_from_slice(r);
        }
        Ok(Self { values, n, p })
    }

    pub fn from_matrix(y: &DMatrix<f64>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..y.nrows()).map(|i| y.row(i).iter().copied().collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.p)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.p, &self.values)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.p);
        for r in self.rows() {
            for j in 0..self.p {
                m[j] += r[j];
            }
        }
        m / self.n as f64
    }
}

/// Latent variables of the stochastic representation, one pair per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub z: Vec<f64>,
    pub v: Vec<f64>,
}

impl LatentState {
    pub fn new(z: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if z.len() != v.len() {
            return Err(Error::DegenerateLatents(format!("z has {} entries, v has {}", z.len(), v.len())));
        }
        if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) || z.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateLatents("latents must be finite with v > 0".into()));
        }
        Ok(Self { z, v })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// Precomputed pieces of the observed-data density for one parameter value.
struct DensityPieces {
    p: usize,
    xi: Vec<f64>,
    scale: SpdMatrix,
    /// α'ω^{-1}
    slant: Vec<f64>,
    nu: f64,
    spec: ModelSpec,
}

impl DensityPieces {
    fn from_alpha(ap: &AlphaParams, spec: ModelSpec) -> Self {
        let p = ap.sigma.dim();
        let diag = ap.sigma.diag();
        let slant = (0..p).map(|j| ap.alpha[j] / diag[j].sqrt()).collect();
        Self { p, xi: ap.xi.iter().copied().collect(), scale: ap.sigma.clone(), slant, nu: ap.nu, spec }
    }

    fn logpdf(&self, y: &[f64]) -> f64 {
        let d: Vec<f64> = y.iter().zip(&self.xi).map(|(a, b)| a - b).collect();
        let q = self.scale.inv_quad_form(&d);
        let pf = self.p as f64;
        let heavy = self.spec.heavy_tailed && self.nu.is_finite();
        let base = if heavy {
            mvt_logpdf_from_quad(q, self.p, self.scale.log_det(), self.nu)
        } else {
            -pf * LN_SQRT_2PI - 0.5 * self.scale.log_det() - 0.5 * q
        };
        if !self.spec.skewed {
            return base;
        }
        let s: f64 = self.slant.iter().zip(&d).map(|(a, b)| a * b).sum();
        if heavy {
            let arg = s * ((self.nu + pf) / (q + self.nu)).sqrt();
            LN_2 + base + ln_student_t_cdf_unchecked(arg, self.nu + pf)
        } else {
            LN_2 + base + ln_normal_cdf(s)
        }
    }
}

/// Skew-t log density 2 t_p(y; ξ, Σ, ν) T_1(α'ω^{-1}(y−ξ) √((ν+p)/(Q_y+ν)); ν+p).
/// An infinite ν gives the skew-normal density.
pub fn st_logpdf(y_row: &DVector<f64>, ap: &AlphaParams) -> Result<f64> {
    let p = ap.sigma.dim();
    if y_row.len() != p || ap.xi.len() != p || ap.alpha.len() != p {
        return Err(Error::Matrix(format!("st_logpdf: vector lengths do not match dimension {p}")));
    }
    if !(ap.nu > 0.0) {
        return Err(Error::Domain(format!("st_logpdf requires ν > 0, got {}", ap.nu)));
    }
    Ok(DensityPieces::from_alpha(ap, ModelSpec::SKEW_T).logpdf(y_row.as_slice()))
}

/// Σ_i log f(y_i) under `spec`, with (ξ, α, Σ, ν) recovered from θ.
pub fn observed_loglik(data: &Dataset, tp: &ThetaParams, spec: ModelSpec) -> Result<f64> {
    if tp.dim() != data.p() {
        return Err(Error::Matrix(format!("parameters have dimension {}, data {}", tp.dim(), data.p())));
    }
    let ap = if spec.skewed {
        tp.to_alpha()?
    } else {
        let dp = delta_from_theta(tp)?;
        AlphaParams { xi: dp.xi, alpha: DVector::zeros(tp.dim()), sigma: dp.sigma, nu: dp.nu }
    };
    if spec.heavy_tailed && !(ap.nu > 0.0) {
        return Err(Error::Domain(format!("ν must be positive, got {}", ap.nu)));
    }
    let pieces = DensityPieces::from_alpha(&ap, spec);
    Ok(data.rows().map(|y| pieces.logpdf(y)).sum())
}

/// ε_i = y_i − ξ − ψ|z_i|/√v_i.
pub fn residual(y: &[f64], xi: &DVector<f64>, psi: &DVector<f64>, z: f64, v: f64) -> Vec<f64> {
    let s = z.abs() / v.sqrt();
    (0..y.len()).map(|j| y[j] - xi[j] - psi[j] * s).collect()
}

/// Log of the augmented likelihood of the skew-t model, with all Gaussian
/// normalizing constants included.
pub fn augmented_loglik(data: &Dataset, tp: &ThetaParams, lat: &LatentState) -> Result<f64> {
    augmented_loglik_for(data, tp, lat, ModelSpec::SKEW_T)
}

/// Model-aware augmented likelihood: skewed models carry the z_i factors,
/// heavy-tailed models the Γ(ν/2, ν/2) factors of v_i. Other models treat
/// ψ as 0 or v_i as 1 respectively.
pub fn augmented_loglik_for(data: &Dataset, tp: &ThetaParams, lat: &LatentState, spec: ModelSpec) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    if lat.len() != n {
        return Err(Error::DegenerateLatents(format!("{} latent pairs for {n} rows", lat.len())));
    }
    if tp.dim() != p {
        return Err(Error::Matrix(format!("parameters have dimension {}, data {p}", tp.dim())));
    }
    let nf = n as f64;
    let pf = p as f64;
    let zero = DVector::zeros(p);
    let psi = if spec.skewed { &tp.psi } else { &zero };
    let mut quad = 0.0;
    let mut sum_ln_v = 0.0;
    let mut sum_v = 0.0;
    let mut sum_zz = 0.0;
    for (i, y) in data.rows().enumerate() {
        let v = if spec.heavy_tailed { lat.v[i] } else { 1.0 };
        let z = if spec.skewed { lat.z[i] } else { 0.0 };
        let e = residual(y, &tp.xi, psi, z, v);
        quad += v * tp.g.inv_quad_form(&e);
        sum_ln_v += v.ln();
        sum_v += v;
        sum_zz += z * z;
    }
    let mut total = 0.5 * pf * sum_ln_v - 0.5 * nf * tp.g.log_det() - 0.5 * quad - nf * pf * LN_SQRT_2PI;
    if spec.heavy_tailed {
        let h = 0.5 * tp.nu;
        total += nf * h * h.ln() - nf * ln_gamma_unchecked(h) + (h - 1.0) * sum_ln_v - h * sum_v;
    }
    if spec.skewed {
        total += -0.5 * sum_zz - nf * LN_SQRT_2PI;
    }
    Ok(total)
}

/// Complete-data ML estimates of (ξ, ψ, G) given the latents.
#[derive(Debug, Clone, PartialEq)]
pub struct CmlEstimates {
    pub xi: DVector<f64>,
    pub psi: DVector<f64>,
    pub g: SpdMatrix,
}

/// Relative threshold on (Σz²)(Σv) − (Σ|z|√v)² below which ψ̂ is set to 0.
pub const CML_DEGENERACY_TOL: f64 = 1e-12;

/// Closed-form maximizers of the augmented likelihood in (ξ, ψ, G).
pub fn cml_estimates(data: &Dataset, lat: &LatentState) -> Result<CmlEstimates> {
    cml_estimates_for(data, lat, true)
}

/// As [`cml_estimates`]; with `skewed = false`, ψ is held at 0.
pub fn cml_estimates_for(data: &Dataset, lat: &LatentState, skewed: bool) -> Result<CmlEstimates> {
    let (n, p) = (data.n(), data.p());
    if lat.len() != n {
        return Err(Error::DegenerateLatents(format!("{} latent pairs for {n} rows", lat.len())));
    }
    let mut s_v = 0.0;
    let mut s_a = 0.0;
    let mut s_zz = 0.0;
    let mut vy = DVector::<f64>::zeros(p);
    let mut ay = DVector::<f64>::zeros(p);
    for (i, y) in data.rows().enumerate() {
        let v = lat.v[i];
        let a = lat.z[i].abs() * v.sqrt();
        s_v += v;
        s_a += a;
        s_zz += lat.z[i] * lat.z[i];
        for j in 0..p {
            vy[j] += v * y[j];
            ay[j] += a * y[j];
        }
    }
    if !(s_v > 0.0) || !s_v.is_finite() {
        return Err(Error::DegenerateLatents(format!("Σv = {s_v} is not a positive finite number")));
    }
    let den = s_zz * s_v - s_a * s_a;
    let psi = if skewed && s_zz > 0.0 && den > CML_DEGENERACY_TOL * s_zz * s_v {
        (&ay * s_v - &vy * s_a) / den
    } else {
        DVector::zeros(p)
    };
    let xi = (&vy - &psi * s_a) / s_v;
    let mut g = DMatrix::<f64>::zeros(p, p);
    for (i, y) in data.rows().enumerate() {
        let e = residual(y, &xi, &psi, lat.z[i], lat.v[i]);
        let v = lat.v[i];
        for r in 0..p {
            for c in 0..=r {
                g[(r, c)] += v * e[r] * e[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            g[(c, r)] = g[(r, c)];
        }
    }
    let g = SpdMatrix::from_symmetrized(g / n as f64)?;
    Ok(CmlEstimates { xi, psi, g })
}

/// Solution of n ln(ν/2) − n ψ(ν/2) = Σv_i − Σ ln v_i − n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuSolution {
    /// The grid value returned.
    pub nu: f64,
    /// Continuous root, when one exists inside the search bracket.
    pub root: Option<f64>,
    /// Left side minus right side at `root`.
    pub residual: f64,
}

pub const NU_BRACKET: (f64, f64) = (1e-3, 1e6);

fn nu_equation_lhs(n: f64, nu: f64) -> f64 {
    let h = 0.5 * nu;
    n * (h.ln() - digamma_unchecked(h))
}

/// Bisect the ν-equation on (1e-3, 1e6) and snap the root to the nearest grid
/// value. Without a finite root the largest grid value is returned.
pub fn solve_nu_equation(v: &[f64], grid: &[f64]) -> Result<NuSolution> {
    if grid.is_empty() {
        return Err(Error::Domain("ν grid is empty".into()));
    }
    if v.is_empty() || v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::DegenerateLatents("ν-equation needs positive finite v".into()));
    }
    let max_grid = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = v.len() as f64;
    let rhs: f64 = v.iter().map(|x| x - x.ln() - 1.0).sum();
    let f = |nu: f64| nu_equation_lhs(n, nu) - rhs;
    let (mut lo, mut hi) = NU_BRACKET;
    if !(rhs > 0.0) || f(hi) > 0.0 {
        return Ok(NuSolution { nu: max_grid, root: None, residual: f64::NAN });
    }
    if f(lo) < 0.0 {
        let nu = grid.iter().copied().fold(f64::INFINITY, f64::min);
        return Ok(NuSolution { nu, root: None, residual: f64::NAN });
    }
    // lhs decreases in ν
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (f(lo), f(hi));
    let root = if flo.abs() <= fhi.abs() { lo } else { hi };
    let residual = flo.abs().min(fhi.abs());
    let nu = grid
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |(best, d), g| if (g - root).abs() < d { (g, (g - root).abs()) } else { (best, d) })
        .0;
    Ok(NuSolution { nu, root: Some(root), residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_NU_GRID;

    fn scalar_alpha(alpha: f64, nu: f64) -> AlphaParams {
        AlphaParams {
            xi: DVector::zeros(1),
            alpha: DVector::from_element(1, alpha),
            sigma: SpdMatrix::identity(1),
            nu,
        }
    }

    #[test]
    fn cauchy_reduction() {
        let v = st_logpdf(&DVector::zeros(1), &scalar_alpha(0.0, 1.0)).unwrap();
        assert!((v + std::f64::consts::PI.ln()).abs() < 1e-14);
    }

    #[test]
    fn nu_equation_boundary() {
        let s = solve_nu_equation(&[1.0; 5], &DEFAULT_NU_GRID).unwrap();
        assert_eq!(s.nu, 100.0);
        assert!(s.root.is_none());
    }

    #[test]
    fn nu_equation_two_points() {
        let s = solve_nu_equation(&[0.5, 2.0], &DEFAULT_NU_GRID).unwrap();
        let root = s.root.unwrap();
        assert!((root - 4.3).abs() < 0.1, "root {root}");
        assert!(s.residual < 1e-10);
        assert_eq!(s.nu, 4.0);
    }

    #[test]
    fn cml_zero_z_is_weighted_mean() {
        let data = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.0], vec![2.0, 5.0], vec![0.0, 1.0]]).unwrap();
        let lat = LatentState::new(vec![0.0; 4], vec![1.0, 2.0, 1.0, 0.5]).unwrap();
        let est = cml_estimates(&data, &lat).unwrap();
        assert_eq!(est.psi, DVector::zeros(2));
        let sv = 4.5;
        assert!((est.xi[0] - (1.0 + 6.0 + 2.0) / sv).abs() < 1e-14);
        assert!((est.xi[1] - (2.0 + 0.0 + 5.0 + 0.5) / sv).abs() < 1e-14);
    }

    #[test]
    fn augmented_sign_invariance() {
        let data = Dataset::from_rows(&[vec![0.3], vec![-1.2], vec![2.0]]).unwrap();
        let tp = ThetaParams {
            xi: DVector::from_element(1, 0.1),
            psi: DVector::from_element(1, 0.7),
            g: SpdMatrix::from_rows(&[vec![1.5]]).unwrap(),
            nu: 4.0,
        };
        let a = LatentState::new(vec![0.5, -1.0, 2.0], vec![0.7, 1.3, 0.2]).unwrap();
        let b = LatentState::new(vec![-0.5, 1.0, -2.0], a.v.clone()).unwrap();
        let la = augmented_loglik(&data, &tp, &a).unwrap();
        assert_eq!(la, augmented_loglik(&data, &tp, &b).unwrap());
    }

    #[test]
    fn augmented_scalar_normal_pieces() {
        let data = Dataset::from_rows(&[vec![0.0]]).unwrap();
        let tp = ThetaParams {
            xi: DVector::zeros(1),
            psi: DVector::zeros(1),
            g: SpdMatrix::identity(1),
            nu: 2.0,
        };
        let lat = LatentState::new(vec![0.0], vec![1.0]).unwrap();
        // Γ(1, 1) at v = 1 has log density −1
        let v = augmented_loglik(&data, &tp, &lat).unwrap();
        assert!((v - (-2.0 * LN_SQRT_2PI - 1.0)).abs() < 1e-14);
    }
}
