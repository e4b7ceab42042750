use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulation engine, the analysis routines and the
/// config/output layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
