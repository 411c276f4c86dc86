use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("outside validated domain: {0}")]
    Domain(String),

    #[error("did not converge: {0}")]
    Convergence(String),

    #[error("{triggers} triggers exceed the event-driven cap of {cap}; use aggregated mode")]
    TriggerCapExceeded { triggers: u64, cap: u64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("histogram error: {0}")]
    Histogram(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
