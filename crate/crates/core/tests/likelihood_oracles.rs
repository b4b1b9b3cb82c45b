mod common;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use skewfit::distributions::{mvn_logpdf, mvt_logpdf};
use skewfit::likelihood::{
    augmented_loglik, augmented_loglik_for, cml_estimates, observed_loglik, solve_nu_equation, st_logpdf,
};
use skewfit::model::theta_from_delta;
use skewfit::{AlphaParams, Dataset, LatentState, ModelSpec, RngStream, SpdMatrix, ThetaParams};

use common::{
    det_cofactor, exp_sinh, inverse_cofactor, ln_gamma_ref, lower_tail, normal_cdf_ref, nu_root_ref, quad_form, sinh_sinh,
    st_pdf_1d,
};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

fn spd(rows: &[Vec<f64>]) -> SpdMatrix {
    SpdMatrix::from_rows(rows).unwrap()
}

fn alpha_params(xi: &[f64], alpha: &[f64], sigma: &[Vec<f64>], nu: f64) -> AlphaParams {
    AlphaParams { xi: v(xi), alpha: v(alpha), sigma: spd(sigma), nu }
}

/// ln[2 t_p(y) T_1(·; ν+p)] assembled with cofactor algebra and a quadrature
/// CDF; ν = ∞ gives the skew-normal density.
fn st_logpdf_ref(y: &[f64], xi: &[f64], s: &[Vec<f64>], alpha: &[f64], nu: f64) -> f64 {
    let p = y.len() as f64;
    let d: Vec<f64> = y.iter().zip(xi).map(|(a, b)| a - b).collect();
    let q = quad_form(&inverse_cofactor(s), &d);
    let det = det_cofactor(s);
    let slant: f64 = (0..y.len()).map(|j| alpha[j] / s[j][j].sqrt() * d[j]).sum();
    if nu.is_infinite() {
        let base = -0.5 * (p * (2.0 * PI).ln() + det.ln() + q);
        return 2f64.ln() + base + normal_cdf_ref(slant).ln();
    }
    let base = ln_gamma_ref(0.5 * (nu + p)) - ln_gamma_ref(0.5 * nu) - 0.5 * det.ln() - 0.5 * p * (PI * nu).ln()
        - 0.5 * (nu + p) * (1.0 + q / nu).ln();
    let arg = slant * ((nu + p) / (q + nu)).sqrt();
    let dof = nu + p;
    let c = (ln_gamma_ref(0.5 * (dof + 1.0)) - ln_gamma_ref(0.5 * dof)).exp() / (PI * dof).sqrt();
    let pdf = |t: f64| c * (1.0 + t * t / dof).powf(-0.5 * (dof + 1.0));
    let cdf = if arg <= 0.0 { lower_tail(pdf, arg, 1e-14) } else { 1.0 - lower_tail(pdf, -arg, 1e-14) };
    2f64.ln() + base + cdf.ln()
}

fn theta_of(ap: &AlphaParams) -> ThetaParams {
    theta_from_delta(&ap.to_delta().unwrap()).unwrap()
}

#[test]
fn st_logpdf_examples() {
    let s = vec![vec![2.0, 0.4], vec![0.4, 1.0]];
    let y = v(&[0.3, -1.2]);
    let ap = alpha_params(&[0.1, 0.2], &[0.0, 0.0], &s, 4.0);
    let t = mvt_logpdf(&y, &ap.xi, &ap.sigma, 4.0).unwrap();
    assert!((st_logpdf(&y, &ap).unwrap() - t).abs() < 1e-14);
    let cauchy = alpha_params(&[0.0], &[0.0], &[vec![1.0]], 1.0);
    assert!((st_logpdf(&v(&[0.0]), &cauchy).unwrap() + PI.ln()).abs() < 1e-14);
}

#[test]
fn st_logpdf_matches_reference() {
    let s = vec![vec![7.0, 2.0], vec![2.0, 8.0]];
    for &nu in &[1.0, 4.0, 10.0, f64::INFINITY] {
        for y in [[5.0, 9.0], [2.0, 13.0], [-3.0, 1.0], [12.0, 15.0]] {
            let ap = alpha_params(&[5.0, 9.0], &[4.0, -1.5], &s, nu);
            let got = st_logpdf(&v(&y), &ap).unwrap();
            let want = st_logpdf_ref(&y, &[5.0, 9.0], &s, &[4.0, -1.5], nu);
            assert!((got - want).abs() < 1e-11, "nu={nu} y={y:?}: {got} vs {want}");
        }
    }
}

#[test]
fn st_density_integrates_to_one() {
    for alpha in [-5.0, 0.0, 3.0] {
        for nu in [1.0, 4.0, 30.0] {
            let ap = alpha_params(&[0.0], &[alpha], &[vec![1.0]], nu);
            let total = sinh_sinh(|y| st_logpdf(&v(&[y]), &ap).unwrap().exp(), 1e-13);
            assert!((total - 1.0).abs() < 1e-8, "alpha={alpha} nu={nu}: {total}");
        }
    }
}

fn small_dataset() -> Dataset {
    Dataset::from_rows(&[
        vec![5.2, 9.1],
        vec![6.8, 7.7],
        vec![3.9, 11.4],
        vec![8.3, 10.2],
        vec![5.5, 8.0],
    ])
    .unwrap()
}

#[test]
fn observed_loglik_matches_row_oracle() {
    let data = small_dataset();
    let s = vec![vec![3.0, 0.5], vec![0.5, 2.0]];
    let ap = alpha_params(&[5.0, 9.0], &[2.0, 1.0], &s, 6.0);
    let tp = theta_of(&ap);
    let want: f64 = data.rows().map(|y| st_logpdf_ref(y, &[5.0, 9.0], &s, &[2.0, 1.0], 6.0)).sum();
    assert!((observed_loglik(&data, &tp, ModelSpec::SKEW_T).unwrap() - want).abs() < 1e-10);

    let sn: f64 = data.rows().map(|y| st_logpdf_ref(y, &[5.0, 9.0], &s, &[2.0, 1.0], f64::INFINITY)).sum();
    assert!((observed_loglik(&data, &tp, ModelSpec::SKEW_NORMAL).unwrap() - sn).abs() < 1e-10);

    let sym = ThetaParams { xi: v(&[5.0, 9.0]), psi: v(&[0.0, 0.0]), g: spd(&s), nu: 6.0 };
    let normal: f64 = data.rows().map(|y| mvn_logpdf(&v(y), &sym.xi, &sym.g).unwrap()).sum();
    assert!((observed_loglik(&data, &sym, ModelSpec::NORMAL).unwrap() - normal).abs() < 1e-12);
    let t: f64 = data.rows().map(|y| mvt_logpdf(&v(y), &sym.xi, &sym.g, 6.0).unwrap()).sum();
    assert!((observed_loglik(&data, &sym, ModelSpec::STUDENT_T).unwrap() - t).abs() < 1e-12);
    let huge = ThetaParams { nu: 1e7, ..sym };
    let st = observed_loglik(&data, &huge, ModelSpec::SKEW_T).unwrap();
    assert!((st - normal).abs() < 1e-3);
}

#[test]
fn skew_t_approaches_skew_normal() {
    let data = small_dataset();
    let ap = alpha_params(&[5.0, 9.0], &[2.0, 1.0], &[vec![3.0, 0.5], vec![0.5, 2.0]], 1.0);
    let tp = theta_of(&ap);
    let sn = observed_loglik(&data, &tp, ModelSpec::SKEW_NORMAL).unwrap();
    let gaps: Vec<f64> = [10.0, 100.0, 1e3, 1e4]
        .iter()
        .map(|&nu| (observed_loglik(&data, &ThetaParams { nu, ..tp.clone() }, ModelSpec::SKEW_T).unwrap() - sn).abs())
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[3] < 1e-2);
}

#[test]
fn augmented_loglik_scalar_example() {
    let data = Dataset::from_rows(&[vec![0.0]]).unwrap();
    let tp = ThetaParams { xi: v(&[0.0]), psi: v(&[0.0]), g: SpdMatrix::identity(1), nu: 4.0 };
    let lat = LatentState::new(vec![0.0], vec![1.0]).unwrap();
    let ln_phi0 = -0.5 * (2.0 * PI).ln();
    // Γ(2, 2) density at 1: 2² e^{-2} / Γ(2)
    let gamma_term = 4f64.ln() - 2.0;
    let got = augmented_loglik(&data, &tp, &lat).unwrap();
    assert!((got - (2.0 * ln_phi0 + gamma_term)).abs() < 1e-14);
    let normal = augmented_loglik_for(&data, &tp, &lat, ModelSpec::NORMAL).unwrap();
    assert!((normal - ln_phi0).abs() < 1e-15);
}

#[test]
fn augmented_loglik_ignores_sign_of_z() {
    let data = small_dataset();
    let tp = theta_of(&alpha_params(&[5.0, 9.0], &[2.0, 1.0], &[vec![3.0, 0.5], vec![0.5, 2.0]], 6.0));
    let z = vec![0.3, -1.2, 0.8, 2.0, -0.1];
    let vv = vec![0.9, 1.3, 0.4, 1.0, 2.2];
    let flipped: Vec<f64> = z.iter().map(|x| -x).collect();
    let a = augmented_loglik(&data, &tp, &LatentState::new(z, vv.clone()).unwrap()).unwrap();
    let b = augmented_loglik(&data, &tp, &LatentState::new(flipped, vv).unwrap()).unwrap();
    assert_eq!(a, b);
}

/// ∫∫ exp(augmented) dz dv for one observation at p = 1.
fn marginalize(y: f64, tp: &ThetaParams) -> f64 {
    let data = Dataset::from_rows(&[vec![y]]).unwrap();
    let inner = |vv: f64| {
        2.0 * exp_sinh(
            |z| augmented_loglik(&data, tp, &LatentState::new(vec![z], vec![vv]).unwrap()).unwrap().exp(),
            0.0,
            1e-12,
        )
    };
    exp_sinh(inner, 0.0, 1e-10)
}

#[test]
fn augmented_likelihood_marginalizes_to_skew_t() {
    let mut rng = RngStream::new(77, 0).rng();
    for _ in 0..3 {
        let xi: f64 = rng.random_range(-2.0..2.0);
        let psi: f64 = rng.random_range(-3.0..3.0);
        let g: f64 = rng.random_range(0.3..3.0);
        let nu = [1.0, 3.0, 10.0][rng.random_range(0..3)];
        let y: f64 = xi + rng.random_range(-3.0..3.0);
        let tp = ThetaParams { xi: v(&[xi]), psi: v(&[psi]), g: spd(&[vec![g]]), nu };
        let sigma2 = g + psi * psi;
        let delta = psi / sigma2.sqrt();
        let alpha = delta / (1.0 - delta * delta).sqrt();
        let want = st_pdf_1d(y, xi, sigma2, alpha, nu);
        let got = marginalize(y, &tp);
        assert!((got - want).abs() < 1e-5 * want, "{got} vs {want}");
    }
}

fn random_data(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed, 0).rng();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|j| j as f64 + 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect())
        .collect();
    Dataset::from_rows(&rows).unwrap()
}

fn random_latents(n: usize, seed: u64, unit_v: bool) -> LatentState {
    let mut rng = RngStream::new(seed, 1).rng();
    let gamma = Gamma::new(3.0, 1.0 / 3.0).unwrap();
    let z = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let v = (0..n).map(|_| if unit_v { 1.0 } else { gamma.sample(&mut rng) }).collect();
    LatentState::new(z, v).unwrap()
}

fn with_xi_psi(tp: &ThetaParams, k: usize, h: f64) -> ThetaParams {
    let p = tp.dim();
    let mut out = tp.clone();
    if k < p {
        out.xi[k] += h;
    } else {
        out.psi[k - p] += h;
    }
    out
}

#[test]
fn cml_with_zero_latent_is_weighted_mean() {
    let data = small_dataset();
    let vv = vec![1.0, 2.0, 0.5, 1.5, 1.0];
    let est = cml_estimates(&data, &LatentState::new(vec![0.0; 5], vv.clone()).unwrap()).unwrap();
    assert_eq!(est.psi, v(&[0.0, 0.0]));
    let total: f64 = vv.iter().sum();
    for j in 0..2 {
        let mean: f64 = data.rows().zip(&vv).map(|(y, w)| w * y[j]).sum::<f64>() / total;
        assert!((est.xi[j] - mean).abs() < 1e-12);
    }
}

#[test]
fn cml_is_stationary_in_location_and_slant() {
    for (seed, p) in [(1u64, 1usize), (2, 2), (3, 4)] {
        let data = random_data(40, p, seed);
        let lat = random_latents(40, seed, true);
        let est = cml_estimates(&data, &lat).unwrap();
        let tp = ThetaParams { xi: est.xi, psi: est.psi, g: est.g, nu: 5.0 };
        let h = 1e-5;
        let scale = augmented_loglik(&data, &tp, &lat).unwrap().abs();
        for k in 0..2 * p {
            let up = augmented_loglik(&data, &with_xi_psi(&tp, k, h), &lat).unwrap();
            let dn = augmented_loglik(&data, &with_xi_psi(&tp, k, -h), &lat).unwrap();
            let grad = (up - dn) / (2.0 * h);
            assert!(grad.abs() <= 1e-6 * scale, "p={p} k={k}: {grad}");
        }
    }
}

#[test]
fn cml_beats_random_perturbations() {
    let data = random_data(30, 2, 9);
    let lat = random_latents(30, 9, false);
    let est = cml_estimates(&data, &lat).unwrap();
    let tp = ThetaParams { xi: est.xi, psi: est.psi, g: est.g, nu: 5.0 };
    let best = augmented_loglik(&data, &tp, &lat).unwrap();
    let mut rng = RngStream::new(10, 0).rng();
    for _ in 0..100 {
        let mut q = tp.clone();
        for j in 0..2 {
            q.xi[j] += 0.1 * rng.random_range(-1.0..1.0);
            q.psi[j] += 0.1 * rng.random_range(-1.0..1.0);
        }
        let e = DMatrix::from_fn(2, 2, |_, _| 0.05 * rng.random_range(-1.0..1.0));
        let g = tp.g.matrix() + (&e + e.transpose()) * 0.5;
        let Ok(g) = SpdMatrix::new(g) else { continue };
        q.g = g;
        assert!(augmented_loglik(&data, &q, &lat).unwrap() <= best);
    }
}

#[test]
fn nu_equation_examples() {
    let grid: Vec<f64> = skewfit::model::DEFAULT_NU_GRID.to_vec();
    let flat = solve_nu_equation(&[1.0; 10], &grid).unwrap();
    assert_eq!(flat.nu, 100.0);
    assert!(flat.root.is_none());

    let sol = solve_nu_equation(&[0.5, 2.0], &grid).unwrap();
    let root = sol.root.unwrap();
    assert!((root - nu_root_ref(&[0.5, 2.0])).abs() < 1e-8 * root);
    assert!((root - 4.3).abs() < 0.05, "{root}");
    assert_eq!(sol.nu, 4.0);
    assert!(sol.residual <= 1e-10);
}

#[test]
fn nu_equation_is_consistent() {
    let mut rng = RngStream::new(5, 0).rng();
    let gamma = Gamma::new(5.0, 0.2).unwrap();
    let v: Vec<f64> = (0..10_000).map(|_| gamma.sample(&mut rng)).collect();
    let sol = solve_nu_equation(&v, &skewfit::model::DEFAULT_NU_GRID).unwrap();
    let root = sol.root.unwrap();
    assert!((root - 10.0).abs() < 1.5, "{root}");
    assert!((root - nu_root_ref(&v)).abs() < 1e-8 * root);
}

proptest! {
    #[test]
    fn augmented_loglik_finite_and_sign_symmetric(
        z in prop::collection::vec(-3.0f64..3.0, 5),
        vv in prop::collection::vec(0.05f64..5.0, 5),
        nu in 0.5f64..60.0,
    ) {
        let data = small_dataset();
        let tp = ThetaParams { nu, ..theta_of(&alpha_params(&[5.0, 9.0], &[2.0, 1.0], &[vec![3.0, 0.5], vec![0.5, 2.0]], nu)) };
        let a = augmented_loglik(&data, &tp, &LatentState::new(z.clone(), vv.clone()).unwrap()).unwrap();
        let neg: Vec<f64> = z.iter().map(|x| -x).collect();
        let b = augmented_loglik(&data, &tp, &LatentState::new(neg, vv).unwrap()).unwrap();
        prop_assert!(a.is_finite());
        prop_assert_eq!(a, b);
    }
}
