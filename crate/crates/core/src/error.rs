use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter is outside its admissible range.
    #[error("invalid parameter {name}: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// An input violated an operation's precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Fields living on different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid cover: {0}")]
    InvalidCover(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("solver blow-up at t = {time}: max |theta_hat| = {max_coeff}")]
    BlowUp { time: f64, max_coeff: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
