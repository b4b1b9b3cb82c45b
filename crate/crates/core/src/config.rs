//! Run configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::model::{AlphaParams, ModelSpec, PriorConfig};
use crate::pmc::PmcSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Fit,
    Compare,
    Study,
}

/// Named overrides of the sampler size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// N = 4000 particles, T = 5 iterations.
    Desk,
}

impl Preset {
    pub fn settings(&self) -> PmcSettings {
        match self {
            Preset::Desk => PmcSettings { particles: 4000, iterations: 5 },
        }
    }
}

/// True parameters and size of simulated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Generating model for `simulate`.
    pub model: ModelSpec,
    /// Generating models for `study`.
    pub generating_models: Vec<ModelSpec>,
    pub n: usize,
    pub xi: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub nu: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::SKEW_T,
            generating_models: ModelSpec::ALL.to_vec(),
            n: 200,
            xi: vec![5.0, 9.0],
            alpha: vec![4.0, 4.0],
            sigma: vec![vec![7.0, 2.0], vec![2.0, 8.0]],
            nu: 10.0,
        }
    }
}

impl SimulationConfig {
    pub fn truth(&self) -> Result<AlphaParams> {
        let sigma = SpdMatrix::from_rows(&self.sigma)?;
        let p = sigma.dim();
        if self.xi.len() != p || self.alpha.len() != p {
            return Err(Error::Config(format!("simulate.xi and simulate.alpha must have length {p}")));
        }
        Ok(AlphaParams {
            xi: DVector::from_vec(self.xi.clone()),
            alpha: DVector::from_vec(self.alpha.clone()),
            sigma,
            nu: self.nu,
        })
    }
}

/// Mirror of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Header names of the CSV columns to analyse, in order.
    pub columns: Option<Vec<String>>,
    /// Model for `fit`.
    pub model: ModelSpec,
    /// Candidate models for `compare` and `study`.
    pub models: Vec<ModelSpec>,
    pub prior: PriorConfig,
    pub particles: usize,
    pub iterations: usize,
    pub seed: u64,
    pub replications: usize,
    pub simulate: SimulationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pmc = PmcSettings::default();
        Self {
            command: None,
            input: None,
            output: None,
            columns: None,
            model: ModelSpec::SKEW_T,
            models: ModelSpec::ALL.to_vec(),
            prior: PriorConfig::default(),
            particles: pmc.particles,
            iterations: pmc.iterations,
            seed: 0,
            replications: 50,
            simulate: SimulationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::Config(format!("particles must be at least 2, got {}", self.particles)));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.replications < 1 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("models must list at least one model".into()));
        }
        self.prior.validate()
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let s = preset.settings();
        self.particles = s.particles;
        self.iterations = s.iterations;
    }

    pub fn pmc_settings(&self) -> PmcSettings {
        PmcSettings { particles: self.particles, iterations: self.iterations }
    }

    /// Candidate models, deduplicated, in the canonical order ST, t, SN, N.
    pub fn candidate_models(&self) -> Vec<ModelSpec> {
        ModelSpec::ALL.into_iter().filter(|m| self.models.contains(m)).collect()
    }
}
