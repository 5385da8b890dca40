use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("batch error: {0}")]
    Batch(String),

    #[error("sample-size error: need at least {needed}, got {got}")]
    SampleSize { needed: usize, got: usize },

    #[error("unknown parameter set `{0}`")]
    UnknownKey(String),

    #[error("frozen parameter set `{0}` was modified")]
    FrozenViolation(String),

    #[error("non-finite loss in `{part}` at epoch {epoch}, step {step}")]
    NonFinite { part: String, epoch: usize, step: usize },

    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Parameter(_) => "parameter",
            Error::Batch(_) => "batch",
            Error::SampleSize { .. } => "sample_size",
            Error::UnknownKey(_) => "key",
            Error::FrozenViolation(_) => "frozen_violation",
            Error::NonFinite { .. } => "non_finite",
            Error::Input(_) => "input",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
