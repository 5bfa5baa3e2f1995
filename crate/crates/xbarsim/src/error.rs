use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    /// A problem tied to one layer of a model bundle.
    #[error("layer {layer}: {message}")]
    Layer { layer: usize, message: String },

    #[error("precision {bits} out of range {lo}..={hi}")]
    Precision { bits: u32, lo: u32, hi: u32 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("drive mode does not match: {0}")]
    DriveMode(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid ADC range [{lo}, {hi}]")]
    AdcRange { lo: i64, hi: i64 },

    #[error("hardware config: {0}")]
    Config(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("model failed validation:\n{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn layer(layer: usize, message: impl Into<String>) -> Self {
        Error::Layer { layer, message: message.into() }
    }
}
