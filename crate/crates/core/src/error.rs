use thiserror::Error;

use crate::model::PreconditionError;

/// Errors raised by the numerical kernels, the sampler and the IO layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix error: {0}")]
    Matrix(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("degenerate latent variables: {0}")]
    DegenerateLatents(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("degenerate population at iteration {iteration}: {reason}")]
    DegeneratePopulation { iteration: usize, reason: String },

    #[error("posterior precondition failed: {0}")]
    Precondition(#[from] PreconditionError),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
