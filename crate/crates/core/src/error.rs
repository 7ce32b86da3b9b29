use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("{solver} diverged at {location}: {reason}")]
    Divergence {
        solver: &'static str,
        location: String,
        reason: String,
    },

    #[error("combinatorial budget exceeded: {candidates} candidate supports > {budget}")]
    BudgetExceeded { candidates: u128, budget: u128 },

    #[error("no support of size <= {k_max} reproduces the measurements")]
    Infeasible { k_max: usize },

    #[error("parse error in {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
