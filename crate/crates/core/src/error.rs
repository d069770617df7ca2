use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid transform, scheme or filter configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("decomposition error: {0}")]
    Decomposition(String),

    /// Sample set with zero variance or too few values to fit a model.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Two signatures (or a signature and an index) disagree on scheme,
    /// marginal family, transform configuration or group layout.
    #[error("incompatible signatures: {0}")]
    Incompatible(String),

    #[error("index format error: {0}")]
    Format(String),

    #[error("index corrupted at byte offset {offset}: {reason}")]
    Corruption { offset: u64, reason: String },

    /// The dataset directory no longer matches the index manifest.
    #[error("dataset changed: {0}")]
    DatasetChanged(String),

    #[error("cannot ingest {path}: {reason}")]
    Ingest { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateSample(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
