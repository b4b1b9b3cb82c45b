//! Objective-Bayes inference for the multivariate skew-t distribution and its
//! Normal, Student-t and skew-normal sub-models by Population Monte Carlo.

pub mod commands;
pub mod config;
pub mod distributions;
pub mod error;
pub mod io;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod pmc;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod specfun;

pub use error::{Error, Result};
pub use likelihood::{Dataset, LatentState};
pub use linalg::SpdMatrix;
pub use model::{AlphaParams, DeltaParams, ModelSpec, PriorConfig, ThetaParams};
pub use rng::RngStream;
