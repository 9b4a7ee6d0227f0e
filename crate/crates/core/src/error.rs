use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record file line could not be decoded.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Cross-record references or record invariants do not hold.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },

    /// An argument is outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("stale index: {0}")]
    Stale(String),

    #[error("invalid binary file: {0}")]
    Format(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("external discriminator: {0}")]
    External(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}
