use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    /// Training produced a non-finite loss.
    #[error("diverged at iteration {iteration}: non-finite loss (offending layer: {layer:?})")]
    Divergence {
        iteration: usize,
        /// First layer whose weights or outputs went non-finite, if it could be located.
        layer: Option<usize>,
    },

    #[error("policy encoding mismatch: file has {found:?}, reader expects {expected:?}")]
    EncodingMismatch { expected: String, found: String },

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { expected: u32, found: u32 },

    #[error("malformed data in {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than by a failing run.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Divergence { .. })
    }
}
