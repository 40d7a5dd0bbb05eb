//! Crate-wide error type.
//!
//! Every fallible API in this crate returns [`Result`]. The variants mirror
//! the failure classes callers are expected to distinguish: bad configuration,
//! mismatched array shapes, violated call contracts, out-of-domain math
//! inputs, malformed checkpoints, and I/O.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Array shape does not match what the operation requires.
    #[error("shape error: {0}")]
    Shape(String),

    /// A caller broke an API precondition.
    #[error("contract error: {0}")]
    Contract(String),

    /// A numeric input lies outside the mathematical domain of the formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A checkpoint file is malformed, truncated, or of an unknown version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Filesystem failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
