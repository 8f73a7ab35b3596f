use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument lies outside the domain where the function is finite.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("root finder did not converge: {0}")]
    Convergence(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("invalid value: {0}")]
    Value(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for command-line front ends.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Value(_) | Error::Precondition(_) => 2,
            Error::Domain(_) | Error::Convergence(_) | Error::Grid(_) => 3,
            Error::Io { .. } | Error::Serialize(_) => 4,
        }
    }
}
