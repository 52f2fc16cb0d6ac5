use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}: {message}")]
    MalformedRow { path: PathBuf, row: usize, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty target set")]
    EmptyTargets,

    #[error("similarity scores have zero total mass")]
    ZeroMass,

    #[error("invalid manifest field `{field}`: {message}")]
    Manifest { field: String, message: String },

    #[error("split {split}, method {method}: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { split: usize, method: String, epoch: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedRow { .. } => "malformed-row",
            Error::Format { .. } => "format",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::EmptyTargets => "empty-targets",
            Error::ZeroMass => "zero-mass",
            Error::Manifest { .. } => "manifest",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
        }
    }
}
