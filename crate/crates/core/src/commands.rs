//! The simulate, fit, compare and study commands.
//!
//! Every random stream is derived from the configured seed and the identity
//! of the model and replication it serves, never from execution order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{load_csv_columns, write_csv, FitReport};
use crate::likelihood::Dataset;
use crate::model::{ModelSpec, PriorConfig};
use crate::pmc::{run_pmc, PmcSettings};
use crate::rng::RngStream;
use crate::simulate::simulate_dataset;

const TAG_MODEL: u64 = 11;
const TAG_SIMULATE: u64 = 12;
const TAG_STUDY_DATA: u64 = 13;
const TAG_STUDY_FIT: u64 = 14;

fn root_stream(seed: u64) -> RngStream {
    RngStream::new(seed, 0)
}

fn model_stream(base: RngStream, spec: ModelSpec) -> RngStream {
    base.substream(TAG_MODEL, spec.index() as u64)
}

fn keyed(tag: u64, spec: ModelSpec) -> u64 {
    (spec.index() as u64) << 8 | tag
}

/// Read the configured input CSV.
pub fn load_input(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.input.as_ref().ok_or_else(|| Error::Config("no input file configured".into()))?;
    load_csv_columns(path, cfg.columns.as_deref())
}

/// Simulate one dataset from the `[simulate]` section.
pub fn simulate_command(cfg: &RunConfig) -> Result<Dataset> {
    let truth = cfg.simulate.truth()?;
    let data = simulate_dataset(
        cfg.simulate.model,
        &truth,
        cfg.simulate.n,
        root_stream(cfg.seed).substream(TAG_SIMULATE, 0),
    )?;
    if let Some(out) = &cfg.output {
        write_csv(&data, out)?;
    }
    Ok(data)
}

/// Fit `spec` to `data`, drawing from the model's own stream under `base`.
pub fn fit_dataset(
    data: &Dataset,
    spec: ModelSpec,
    prior: &PriorConfig,
    settings: PmcSettings,
    base: RngStream,
    seed: u64,
) -> Result<FitReport> {
    let fit = run_pmc(data, spec, prior, settings, model_stream(base, spec))?;
    Ok(FitReport::from_fit(&fit, data.n(), settings.particles, settings.iterations, seed))
}

pub fn fit_command(cfg: &RunConfig) -> Result<FitReport> {
    let data = load_input(cfg)?;
    fit_dataset(&data, cfg.model, &cfg.prior, cfg.pmc_settings(), root_stream(cfg.seed), cfg.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProbability {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub log_marginal_likelihood: Option<f64>,
    pub probability: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub n: usize,
    pub p: usize,
    pub particles: usize,
    pub iterations: usize,
    pub seed: u64,
    pub best_model: Option<String>,
    pub models: Vec<ModelProbability>,
    pub fits: Vec<FitReport>,
}

impl CompareReport {
    pub fn probability(&self, model: ModelSpec) -> Option<f64> {
        self.models.iter().find(|m| m.model == model.name()).map(|m| m.probability)
    }
}

/// π̂(M | y) ∝ p̂(y | M) under a uniform prior over the successfully fitted
/// models.
pub fn model_probabilities(log_ml: &[Option<f64>]) -> Vec<f64> {
    let max = log_ml.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![0.0; log_ml.len()];
    }
    let raw: Vec<f64> = log_ml.iter().map(|l| l.map_or(0.0, |l| (l - max).exp())).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

/// Fit every candidate model and convert marginal likelihoods into model
/// probabilities. Failed models get probability 0 and an error message.
pub fn compare_dataset(
    data: &Dataset,
    models: &[ModelSpec],
    prior: &PriorConfig,
    settings: PmcSettings,
    base: RngStream,
    seed: u64,
) -> Result<CompareReport> {
    let candidates: Vec<ModelSpec> = ModelSpec::ALL.into_iter().filter(|m| models.contains(m)).collect();
    if candidates.is_empty() {
        return Err(Error::Config("no candidate models".into()));
    }
    let outcomes: Vec<Result<FitReport>> = candidates
        .par_iter()
        .map(|&m| fit_dataset(data, m, prior, settings, base, seed))
        .collect();
    let log_ml: Vec<Option<f64>> = outcomes
        .iter()
        .map(|o| o.as_ref().ok().map(|f| f.log_marginal_likelihood).filter(|l| l.is_finite()))
        .collect();
    if log_ml.iter().all(Option::is_none) {
        let reasons: Vec<String> = candidates
            .iter()
            .zip(&outcomes)
            .filter_map(|(m, o)| o.as_ref().err().map(|e| format!("{m}: {e}")))
            .collect();
        return Err(Error::Numeric(format!("every model failed to fit: {}", reasons.join("; "))));
    }
    let probs = model_probabilities(&log_ml);
    let mut entries = Vec::with_capacity(candidates.len());
    let mut fits = Vec::new();
    for ((m, outcome), prob) in candidates.iter().zip(outcomes).zip(&probs) {
        match outcome {
            Ok(fit) => {
                entries.push(ModelProbability {
                    model: m.name().into(),
                    log_marginal_likelihood: Some(fit.log_marginal_likelihood),
                    probability: *prob,
                    error: None,
                });
                fits.push(fit);
            }
            Err(e) => {
                log::warn!("model {m} failed and is excluded from the comparison: {e}");
                entries.push(ModelProbability {
                    model: m.name().into(),
                    log_marginal_likelihood: None,
                    probability: 0.0,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let best_model = entries
        .iter()
        .filter(|e| e.error.is_none())
        .fold(None::<&ModelProbability>, |best, e| match best {
            Some(b) if b.probability >= e.probability => Some(b),
            _ => Some(e),
        })
        .map(|e| e.model.clone());
    Ok(CompareReport {
        n: data.n(),
        p: data.p(),
        particles: settings.particles,
        iterations: settings.iterations,
        seed,
        best_model,
        models: entries,
        fits,
    })
}

pub fn compare_command(cfg: &RunConfig) -> Result<CompareReport> {
    let data = load_input(cfg)?;
    compare_dataset(&data, &cfg.models, &cfg.prior, cfg.pmc_settings(), root_stream(cfg.seed), cfg.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub generating_model: String,
    pub replication: usize,
    pub probabilities: BTreeMap<String, f64>,
    pub true_model_probability: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub top_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub generating_model: String,
    pub replications: usize,
    pub failures: usize,
    /// How often each model was ranked first.
    pub top_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub n: usize,
    pub replications: usize,
    pub particles: usize,
    pub iterations: usize,
    pub seed: u64,
    pub summary: Vec<StudySummary>,
    /// Grouped by generating model, each group sorted by decreasing
    /// probability of the true model.
    pub rows: Vec<StudyRow>,
}

fn study_row(cfg: &RunConfig, generating: ModelSpec, replication: usize) -> StudyRow {
    let base = root_stream(cfg.seed);
    let outcome = cfg.simulate.truth().and_then(|truth| {
        let data_stream = base.substream(keyed(TAG_STUDY_DATA, generating), replication as u64);
        let data = simulate_dataset(generating, &truth, cfg.simulate.n, data_stream)?;
        let fit_base = base.substream(keyed(TAG_STUDY_FIT, generating), replication as u64);
        compare_dataset(&data, &cfg.models, &cfg.prior, cfg.pmc_settings(), fit_base, cfg.seed)
    });
    match outcome {
        Ok(report) => {
            let probabilities: BTreeMap<String, f64> =
                report.models.iter().map(|m| (m.model.clone(), m.probability)).collect();
            StudyRow {
                generating_model: generating.name().into(),
                replication,
                true_model_probability: report.probability(generating).unwrap_or(0.0),
                probabilities,
                top_model: report.best_model,
                error: None,
            }
        }
        Err(e) => StudyRow {
            generating_model: generating.name().into(),
            replication,
            probabilities: BTreeMap::new(),
            true_model_probability: 0.0,
            top_model: None,
            error: Some(e.to_string()),
        },
    }
}

/// For each generating model, simulate `replications` datasets and compare
/// the candidate models on each.
pub fn study_command(cfg: &RunConfig) -> Result<StudyReport> {
    let generating: Vec<ModelSpec> =
        ModelSpec::ALL.into_iter().filter(|m| cfg.simulate.generating_models.contains(m)).collect();
    if generating.is_empty() {
        return Err(Error::Config("simulate.generating_models is empty".into()));
    }
    let jobs: Vec<(ModelSpec, usize)> =
        generating.iter().flat_map(|&g| (0..cfg.replications).map(move |r| (g, r))).collect();
    let mut rows: Vec<StudyRow> = jobs.par_iter().map(|&(g, r)| study_row(cfg, g, r)).collect();
    let mut summary = Vec::new();
    for g in &generating {
        let group: Vec<&StudyRow> = rows.iter().filter(|r| r.generating_model == g.name()).collect();
        let mut top_counts = BTreeMap::new();
        for row in &group {
            if let Some(top) = &row.top_model {
                *top_counts.entry(top.clone()).or_insert(0) += 1;
            }
        }
        summary.push(StudySummary {
            generating_model: g.name().into(),
            replications: group.len(),
            failures: group.iter().filter(|r| r.error.is_some()).count(),
            top_counts,
        });
    }
    rows.sort_by(|a, b| {
        let ga = ModelSpec::from_name(&a.generating_model).map(|m| m.index()).unwrap_or(usize::MAX);
        let gb = ModelSpec::from_name(&b.generating_model).map(|m| m.index()).unwrap_or(usize::MAX);
        ga.cmp(&gb)
            .then(b.true_model_probability.total_cmp(&a.true_model_probability))
            .then(a.replication.cmp(&b.replication))
    });
    Ok(StudyReport {
        n: cfg.simulate.n,
        replications: cfg.replications,
        particles: cfg.particles,
        iterations: cfg.iterations,
        seed: cfg.seed,
        summary,
        rows,
    })
}
