//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} outside [{lo}, {hi}]")]
    Index { index: usize, lo: usize, hi: usize },

    /// Samples whose fitted moments collapse.
    #[error("degenerate samples: {0}")]
    Degenerate(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, step {step} (kappa = {kappa}, batch rows {batch_rows:?})")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        kappa: f64,
        batch_rows: Vec<usize>,
    },

    /// A sampler chain left the finite floats.
    #[error("chain {chain} became non-finite at step {step}")]
    NonFiniteChain { chain: usize, step: usize },

    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input file (CSV, IDX, checkpoint, tensor).
    #[error("format error in {path:?}: {message}")]
    Format { path: PathBuf, message: String },

    /// An error raised inside a named pipeline stage.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// The innermost error beneath any stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
