//! Population Monte Carlo over (θ, z, v): initialize by mimicking the
//! stochastic representation, then repeatedly propose from the conditional
//! kernels, weight, record estimates and resample.

mod proposals;
mod vcond;

pub use proposals::{
    nu_log_pmf, propose_g, propose_nu, propose_particle, propose_psi, propose_v, propose_xi, propose_z, zcond_params,
    ProposedParticle,
};
pub use vcond::{
    beta_star, envelope, instrumental_logpdf, kl_divergence, kv_constant, kv_constant_with_route, kv_quadrature,
    sample_v, vcond_coeffs, vcond_log_kernel, KvRoute, RejectionEnvelope, VCondCoeffs, VDraw, MAX_REJECTION_TRIALS,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::gamma_sample;
use crate::error::{Error, Result};
use crate::likelihood::{augmented_loglik_for, cml_estimates_for, Dataset, LatentState};
use crate::linalg::SpdMatrix;
use crate::model::{
    delta_from_theta, log_prior, validate_posterior_preconditions, ModelSpec, PreconditionError, PriorConfig,
    ThetaParams,
};
use crate::rng::RngStream;

const TAG_INIT: u64 = 1;
const TAG_PROPOSE: u64 = 2;
const TAG_RESAMPLE: u64 = 3;

fn iteration_tag(kind: u64, iteration: usize) -> u64 {
    ((iteration as u64) << 8) | kind
}

/// Attempts per particle at drawing latents with a usable CML point.
pub const INIT_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub theta: ThetaParams,
    pub lat: LatentState,
    /// ln ζ̃; −∞ for particles with zero weight.
    pub log_unnorm_weight: f64,
    /// ζ, normalized over the population.
    pub norm_weight: f64,
    /// ln q of the proposal that produced this particle; +∞ marks a failed
    /// proposal.
    pub log_proposal: f64,
}

/// Weighted posterior means of θ for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate {
    pub xi: DVector<f64>,
    pub psi: DVector<f64>,
    pub g: DMatrix<f64>,
    /// Posterior pmf of ν over the grid (heavy-tailed models only).
    pub nu_pmf: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub particles: Vec<Particle>,
    pub iteration: usize,
    pub entropy: f64,
    pub estimates: Option<ThetaEstimate>,
    pub log_sum_unnorm: f64,
}

/// Per-iteration record emitted by [`run_pmc`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    pub entropy: f64,
    pub log_sum_unnorm_weights: f64,
    /// Draws over trials of the v rejection sampler (1 when v is not sampled).
    pub v_acceptance_rate: f64,
    pub zero_weight_particles: usize,
    pub failed_proposals: usize,
    pub effective_sample_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmcSettings {
    pub particles: usize,
    pub iterations: usize,
}

impl Default for PmcSettings {
    fn default() -> Self {
        Self { particles: 20_000, iterations: 6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: ModelSpec,
    pub log_marginal_likelihood: f64,
    pub xi: DVector<f64>,
    pub psi: DVector<f64>,
    pub g: SpdMatrix,
    pub sigma: SpdMatrix,
    pub delta: DVector<f64>,
    pub alpha: DVector<f64>,
    pub nu_grid: Vec<f64>,
    pub nu_pmf: Option<Vec<f64>>,
    pub nu_mean: Option<f64>,
    pub diagnostics: Vec<IterationDiagnostics>,
}

fn check_inputs(data: &Dataset, cfg: &PriorConfig, n_particles: usize) -> Result<()> {
    validate_posterior_preconditions(data.n(), data.p(), cfg)?;
    cfg.validate()?;
    if n_particles < 2 {
        return Err(Error::Config(format!("need at least 2 particles, got {n_particles}")));
    }
    Ok(())
}

/// Whitened, centred observations, used to couple the initial |z_i| with a
/// random projection of the data.
fn whitened_residuals(data: &Dataset) -> Result<Vec<DVector<f64>>> {
    let mean = data.mean();
    let n = data.n() as f64;
    let mut s = DMatrix::zeros(data.p(), data.p());
    for r in data.rows() {
        let e = DVector::from_row_slice(r) - &mean;
        s += &e * e.transpose() / n;
    }
    let s = SpdMatrix::from_symmetrized(s)?;
    Ok(data
        .rows()
        .map(|r| {
            let e: Vec<f64> = r.iter().zip(mean.iter()).map(|(y, m)| y - m).collect();
            DVector::from_vec(s.whiten(&e))
        })
        .collect())
}

/// i.i.d. N(0, 1) draws whose magnitudes are assigned to observations by the
/// ranks of ρ·u'r_i + √(1−ρ²)·e_i, with u a uniform random direction and
/// ρ ~ U(0, 1). ρ = 0 is plain independent sampling.
fn coupled_z<R: Rng + ?Sized>(scores: &[DVector<f64>], rng: &mut R) -> Vec<f64> {
    let n = scores.len();
    let p = scores.first().map_or(0, |r| r.len());
    let u = DVector::<f64>::from_fn(p, |_, _| StandardNormal.sample(rng));
    let u = u.normalize();
    let rho: f64 = rng.random();
    let keys: Vec<f64> = scores
        .iter()
        .map(|r| rho * u.dot(r) + (1.0 - rho * rho).sqrt() * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    let mut magnitudes: Vec<f64> = (0..n).map(|_| f64::abs(StandardNormal.sample(rng))).collect();
    magnitudes.sort_by(f64::total_cmp);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let mut z = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        z[i] = sign * magnitudes[rank];
    }
    z
}

fn init_particle<R: Rng + ?Sized>(
    data: &Dataset,
    spec: ModelSpec,
    cfg: &PriorConfig,
    scores: Option<&[DVector<f64>]>,
    rng: &mut R,
) -> Result<Particle> {
    let n = data.n();
    let mut last_err = None;
    for _ in 0..INIT_RETRIES {
        let nu = if spec.heavy_tailed {
            cfg.nu_grid[rng.random_range(0..cfg.nu_grid.len())]
        } else {
            f64::INFINITY
        };
        let v = if spec.heavy_tailed {
            (0..n).map(|_| gamma_sample(0.5 * nu, 0.5 * nu, rng)).collect::<Result<Vec<_>>>()?
        } else {
            vec![1.0; n]
        };
        let z = match scores {
            Some(scores) => coupled_z(scores, rng),
            None => vec![0.0; n],
        };
        let lat = match LatentState::new(z, v) {
            Ok(l) => l,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        match cml_estimates_for(data, &lat, spec.skewed) {
            Ok(est) => {
                let theta = ThetaParams { xi: est.xi, psi: est.psi, g: est.g, nu };
                return Ok(Particle {
                    theta,
                    lat,
                    log_unnorm_weight: 0.0,
                    norm_weight: 1.0,
                    log_proposal: 0.0,
                });
            }
            Err(e @ (Error::DegenerateLatents(_) | Error::Matrix(_))) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::DegenerateLatents("initialization failed".into())))
}

/// Draw the starting population: ν uniform on the grid, v_i ~ Γ(ν/2, ν/2),
/// z_i ~ N(0, 1) and (ξ, ψ, G) at their complete-data ML values. The |z_i|
/// are i.i.d. half-normal but randomly rank-coupled with the data (see
/// `coupled_z`) so that the population starts spread over skewness directions.
pub fn initialize_population(
    data: &Dataset,
    spec: ModelSpec,
    cfg: &PriorConfig,
    n_particles: usize,
    stream: RngStream,
) -> Result<PopulationState> {
    check_inputs(data, cfg, n_particles)?;
    let scores = if spec.skewed { Some(whitened_residuals(data)?) } else { None };
    let mut particles = (0..n_particles)
        .into_par_iter()
        .map(|j| init_particle(data, spec, cfg, scores.as_deref(), &mut stream.substream(TAG_INIT, j as u64).rng()))
        .collect::<Result<Vec<_>>>()?;
    let w = 1.0 / n_particles as f64;
    for p in &mut particles {
        p.norm_weight = w;
    }
    Ok(PopulationState {
        particles,
        iteration: 0,
        entropy: (n_particles as f64).ln(),
        estimates: None,
        log_sum_unnorm: f64::NAN,
    })
}

/// Log of the unnormalized posterior (augmented likelihood plus prior).
pub fn log_target(data: &Dataset, p: &Particle, spec: ModelSpec, cfg: &PriorConfig) -> f64 {
    let prior = log_prior(&p.theta, spec, cfg);
    if prior == f64::NEG_INFINITY {
        return prior;
    }
    match augmented_loglik_for(data, &p.theta, &p.lat, spec) {
        Ok(l) => l + prior,
        Err(_) => f64::NEG_INFINITY,
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Set ζ̃_j = π̃(η_j | y) / q(η_j) and normalize. Fails when every weight is 0.
pub fn compute_weights(pop: &mut PopulationState, data: &Dataset, spec: ModelSpec, cfg: &PriorConfig) -> Result<()> {
    let targets: Vec<f64> = pop.particles.par_iter().map(|p| log_target(data, p, spec, cfg)).collect();
    for (p, t) in pop.particles.iter_mut().zip(targets) {
        let lw = t - p.log_proposal;
        p.log_unnorm_weight = if lw.is_nan() { f64::NEG_INFINITY } else { lw };
    }
    normalize_weights(pop)
}

/// Normalize ln ζ̃ into ζ with a stable log-sum-exp and refresh the entropy.
pub fn normalize_weights(pop: &mut PopulationState) -> Result<()> {
    let logs: Vec<f64> = pop.particles.iter().map(|p| p.log_unnorm_weight).collect();
    if logs.iter().any(|v| *v == f64::INFINITY) {
        return Err(Error::DegeneratePopulation {
            iteration: pop.iteration,
            reason: "a particle has infinite weight".into(),
        });
    }
    let lse = log_sum_exp(&logs);
    if lse == f64::NEG_INFINITY {
        return Err(Error::DegeneratePopulation {
            iteration: pop.iteration,
            reason: "all importance weights are zero".into(),
        });
    }
    for p in &mut pop.particles {
        p.norm_weight = (p.log_unnorm_weight - lse).exp();
    }
    pop.log_sum_unnorm = lse;
    pop.entropy = entropy(pop);
    Ok(())
}

/// H = −Σ ζ_j ln ζ_j with 0 ln 0 = 0.
pub fn entropy(pop: &PopulationState) -> f64 {
    let h: f64 = pop
        .particles
        .iter()
        .filter(|p| p.norm_weight > 0.0)
        .map(|p| -p.norm_weight * p.norm_weight.ln())
        .sum();
    h.clamp(0.0, (pop.particles.len() as f64).ln())
}

/// Multinomial resampling: N independent categorical draws on ζ. The
/// resampled particles carry uniform weights.
pub fn resample(pop: &PopulationState, stream: RngStream) -> PopulationState {
    let n = pop.particles.len();
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for p in &pop.particles {
        acc += p.norm_weight;
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = stream.rng();
    let w = 1.0 / n as f64;
    let particles = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            let k = cdf.partition_point(|c| *c <= u).min(n - 1);
            let mut p = pop.particles[k].clone();
            p.log_unnorm_weight = 0.0;
            p.norm_weight = w;
            p
        })
        .collect();
    PopulationState {
        particles,
        iteration: pop.iteration,
        entropy: (n as f64).ln(),
        estimates: pop.estimates.clone(),
        log_sum_unnorm: pop.log_sum_unnorm,
    }
}

/// ln p̂(y) = ln[Σ_t H^(t) Σ_j ζ̃_j^(t) / (N Σ_t H^(t))] from per-iteration
/// pairs (H^(t), ln Σ_j ζ̃_j^(t)).
pub fn marginal_likelihood(history: &[(f64, f64)], n_particles: usize) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Domain("marginal likelihood needs at least one iteration".into()));
    }
    if history.iter().any(|(h, _)| !h.is_finite() || *h < 0.0) {
        return Err(Error::Domain("entropies must be finite and non-negative".into()));
    }
    let total_h: f64 = history.iter().map(|(h, _)| h).sum();
    if !(total_h > 0.0) {
        return Err(Error::DegeneratePopulation {
            iteration: history.len(),
            reason: "every iteration has zero entropy".into(),
        });
    }
    let terms: Vec<f64> = history
        .iter()
        .filter(|(h, _)| *h > 0.0)
        .map(|(h, ls)| h.ln() + ls)
        .collect();
    Ok(log_sum_exp(&terms) - (n_particles as f64).ln() - total_h.ln())
}

/// Weighted means of (ξ, ψ, G) and the ν pmf under the current weights.
pub fn population_estimates(pop: &PopulationState, spec: ModelSpec, cfg: &PriorConfig) -> ThetaEstimate {
    let p = pop.particles[0].theta.dim();
    let mut xi = DVector::zeros(p);
    let mut psi = DVector::zeros(p);
    let mut g = DMatrix::zeros(p, p);
    let mut pmf = vec![0.0; cfg.nu_grid.len()];
    for part in pop.particles.iter().filter(|q| q.norm_weight > 0.0) {
        let w = part.norm_weight;
        xi += &part.theta.xi * w;
        psi += &part.theta.psi * w;
        g += part.theta.g.matrix() * w;
        if spec.heavy_tailed {
            if let Some(k) = cfg.grid_index(part.theta.nu) {
                pmf[k] += w;
            }
        }
    }
    ThetaEstimate { xi, psi, g, nu_pmf: spec.heavy_tailed.then_some(pmf) }
}

/// Run T iterations of PMC with N particles.
///
/// Every particle's proposal uses its own random stream keyed by iteration
/// and particle index, so results do not depend on the thread count.
pub fn run_pmc(
    data: &Dataset,
    spec: ModelSpec,
    cfg: &PriorConfig,
    settings: PmcSettings,
    stream: RngStream,
) -> Result<FitResult> {
    let PmcSettings { particles: n_particles, iterations } = settings;
    if iterations < 1 {
        return Err(Error::Config("need at least one iteration".into()));
    }
    check_inputs(data, cfg, n_particles)?;
    if data.n() <= 2 * data.p() {
        return Err(PreconditionError::InsufficientForScaleProposal { n: data.n(), p: data.p() }.into());
    }
    let mut pop = initialize_population(data, spec, cfg, n_particles, stream)?;
    let mut history = Vec::with_capacity(iterations);
    let mut estimates = Vec::with_capacity(iterations);
    let mut diagnostics = Vec::with_capacity(iterations);
    for t in 1..=iterations {
        let outcomes: Vec<(Particle, usize, usize, bool)> = pop
            .particles
            .par_iter()
            .enumerate()
            .map(|(j, prev)| {
                let mut rng = stream.substream(iteration_tag(TAG_PROPOSE, t), j as u64).rng();
                match propose_particle(&prev.theta, &prev.lat, data, spec, &cfg.nu_grid, &mut rng) {
                    Ok(prop) => (
                        Particle {
                            theta: prop.theta,
                            lat: prop.lat,
                            log_unnorm_weight: 0.0,
                            norm_weight: 0.0,
                            log_proposal: prop.log_proposal,
                        },
                        prop.v_trials,
                        prop.v_draws,
                        false,
                    ),
                    Err(e) => {
                        log::debug!("iteration {t}, particle {j}: proposal failed: {e}");
                        let mut failed = prev.clone();
                        failed.log_proposal = f64::INFINITY;
                        (failed, 0, 0, true)
                    }
                }
            })
            .collect();
        let mut trials = 0usize;
        let mut draws = 0usize;
        let mut failed = 0usize;
        let mut particles = Vec::with_capacity(n_particles);
        for (part, tr, dr, f) in outcomes {
            trials += tr;
            draws += dr;
            failed += f as usize;
            particles.push(part);
        }
        pop.particles = particles;
        pop.iteration = t;
        compute_weights(&mut pop, data, spec, cfg)?;
        let est = population_estimates(&pop, spec, cfg);
        let zero = pop.particles.iter().filter(|p| p.norm_weight == 0.0).count();
        let ess = 1.0 / pop.particles.iter().map(|p| p.norm_weight * p.norm_weight).sum::<f64>();
        let diag = IterationDiagnostics {
            iteration: t,
            entropy: pop.entropy,
            log_sum_unnorm_weights: pop.log_sum_unnorm,
            v_acceptance_rate: if trials > 0 { draws as f64 / trials as f64 } else { 1.0 },
            zero_weight_particles: zero,
            failed_proposals: failed,
            effective_sample_size: ess,
        };
        log::info!(
            "{} iteration {t}: H = {:.4}, ln Σζ̃ = {:.4}, ESS = {:.1}, zero weights = {zero}",
            spec,
            diag.entropy,
            diag.log_sum_unnorm_weights,
            ess
        );
        history.push((pop.entropy, pop.log_sum_unnorm));
        pop.estimates = Some(est.clone());
        estimates.push(est);
        diagnostics.push(diag);
        pop = resample(&pop, stream.substream(iteration_tag(TAG_RESAMPLE, t), 0));
    }
    let log_ml = marginal_likelihood(&history, n_particles)?;
    finalize(spec, cfg, &history, &estimates, log_ml, diagnostics)
}

fn finalize(
    spec: ModelSpec,
    cfg: &PriorConfig,
    history: &[(f64, f64)],
    estimates: &[ThetaEstimate],
    log_ml: f64,
    diagnostics: Vec<IterationDiagnostics>,
) -> Result<FitResult> {
    let total_h: f64 = history.iter().map(|(h, _)| h).sum();
    let p = estimates[0].xi.len();
    let mut xi = DVector::zeros(p);
    let mut psi = DVector::zeros(p);
    let mut g = DMatrix::zeros(p, p);
    let mut pmf = vec![0.0; cfg.nu_grid.len()];
    for ((h, _), est) in history.iter().zip(estimates) {
        let w = h / total_h;
        xi += &est.xi * w;
        psi += &est.psi * w;
        g += &est.g * w;
        if let Some(e) = &est.nu_pmf {
            for (acc, v) in pmf.iter_mut().zip(e) {
                *acc += w * v;
            }
        }
    }
    let g = SpdMatrix::from_symmetrized(g)?;
    let nu_pmf = spec.heavy_tailed.then(|| {
        let s: f64 = pmf.iter().sum();
        pmf.iter().map(|v| v / s).collect::<Vec<_>>()
    });
    let nu_mean = nu_pmf.as_ref().map(|pmf| pmf.iter().zip(&cfg.nu_grid).map(|(w, v)| w * v).sum());
    let theta = ThetaParams { xi: xi.clone(), psi: psi.clone(), g: g.clone(), nu: nu_mean.unwrap_or(f64::INFINITY) };
    let dp = delta_from_theta(&theta)?;
    let alpha = if spec.skewed { dp.to_alpha()?.alpha } else { DVector::zeros(p) };
    Ok(FitResult {
        model: spec,
        log_marginal_likelihood: log_ml,
        xi,
        psi,
        g,
        sigma: dp.sigma,
        delta: dp.delta,
        alpha,
        nu_grid: cfg.nu_grid.clone(),
        nu_pmf,
        nu_mean,
        diagnostics,
    })
}
