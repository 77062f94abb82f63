//! Crate-wide error type.
//!
//! Variants are grouped by failure class so callers (notably the CLI) can
//! map them to coarse exit categories without string-matching messages.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by any pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Array or grid dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input data violates a precondition (empty, mislabeled, too short).
    #[error("data error: {0}")]
    Data(String),

    /// A numeric computation failed (non-finite values, divergence).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A persisted artifact is corrupt, truncated, or version-mismatched.
    #[error("integrity check failed: {0}")]
    Integrity(String),

    /// Underlying file-system failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A text artifact could not be parsed; `location` names the line or
    /// byte offset at fault.
    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },
}

impl Error {
    /// Wraps an i/o error with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
