use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the registration library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parameter binding: {0}")]
    ParameterBinding(String),

    #[error("histogram has no bimodal structure (fewer than two nonempty bins)")]
    NoBimodalStructure,

    #[error("degenerate hull: {0}")]
    DegenerateHull(String),

    #[error("diverged at iteration {iteration}: non-finite {what}")]
    Diverged { iteration: usize, what: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("slice planes miss the solid at slice ordinals {0:?}")]
    SliceOutsideSolid(Vec<usize>),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
