use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("index {index} out of range for {what} (size {size})")]
    Index {
        what: String,
        index: usize,
        size: usize,
    },

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("unknown token {token:?} in field {field}")]
    UnknownToken { field: usize, token: String },

    #[error("invalid hyperparameters: {}", .0.join("; "))]
    InvalidHyperParams(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss while probing parameter {param}")]
    Probe { param: String },

    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("forward trace is stale (trace version {trace}, parameters version {params})")]
    StaleTrace { trace: u64, params: u64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Configuration and validation failures, as opposed to runtime failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidHyperParams(_))
    }
}
