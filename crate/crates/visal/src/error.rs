use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two operands (or an operand and a target) do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter or configuration value is outside its legal range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A metric has no defined value for the given inputs.
    #[error("{metric} undefined: {reason}")]
    UndefinedMetric { metric: &'static str, reason: String },

    /// A grid exceeds the size limit of an exact solver.
    #[error("grid {height}x{width} exceeds the {limit}x{limit} exact-mode limit")]
    GridTooLarge {
        height: usize,
        width: usize,
        limit: usize,
    },

    /// Malformed or truncated file content; `offset` is the byte position
    /// at which decoding failed.
    #[error("{}: {kind} at byte offset {offset}", path.display())]
    Codec {
        path: PathBuf,
        offset: u64,
        kind: String,
    },

    /// A sequence bundle is internally inconsistent at the given frame
    /// (1-based).
    #[error("frame {frame}: {reason}")]
    Ingestion { frame: usize, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn codec(path: impl Into<PathBuf>, offset: u64, kind: impl Into<String>) -> Self {
        Error::Codec {
            path: path.into(),
            offset,
            kind: kind.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
