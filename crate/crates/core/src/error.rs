use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid sparsity: k = {k} for n = {n}")]
    InvalidSparsity { k: usize, n: usize },

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible support constraints: |v2| = {v2} < k = {k}")]
    InfeasibleConstraints { v2: usize, k: usize },

    #[error("invalid extended support: {0}")]
    InvalidExtendedSupport(String),

    #[error("estimator output is not a probability vector: {0}")]
    NotOnSimplex(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite training loss at epoch {epoch}, batch {batch} (parameter norm {param_norm:e}, last finite loss {last_loss:e})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        param_norm: f64,
        last_loss: f64,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
