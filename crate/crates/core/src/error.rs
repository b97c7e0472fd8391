use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the separation and attractor pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("length error: need at least {needed} samples, got {got}")]
    Length { needed: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),

    #[error("unsupported sample rate {got} Hz, expected {expected} Hz")]
    UnsupportedRate { got: u32, expected: u32 },

    #[error("training diverged at step {step}: loss is not finite")]
    Divergence { step: usize },

    #[error("non-finite values produced by layer `{layer}`")]
    Numeric { layer: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate source {source_index}: attractor numerator has zero norm")]
    DegenerateSource { source_index: usize },

    #[error("clustering error: {0}")]
    Clustering(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {message}")]
    Wav { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the program itself rather than by its inputs.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::Numeric { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
