use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum AomError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("not a band-stack file (bad magic bytes)")]
    BadMagic,

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("unknown dtype {0:?}")]
    UnknownDtype(String),

    #[error("payload length mismatch: header declares {expected} bytes, found {found}")]
    PayloadLength { expected: usize, found: usize },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("non-finite pixel at ({c},{y},{x})")]
    NonFinitePixel { c: usize, y: usize, x: usize },

    #[error("channel {0} not present")]
    UnknownChannel(usize),

    #[error("image size {h}x{w} is not divisible by patch size {p}")]
    NotDivisible { h: usize, w: usize, p: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("unknown {kind} strategy {name:?} (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AomError>;

impl AomError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AomError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AomError::Invalid(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        AomError::Shape(msg.into())
    }
}
