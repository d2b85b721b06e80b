use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("sample mean of arm {arm} is undefined (no observations)")]
    UndefinedMean { arm: usize },

    /// The engine detected a broken invariant, e.g. sampling probabilities
    /// that do not sum to one.
    #[error("internal consistency error: {0}")]
    InternalConsistency(String),

    #[error("unsupported conjugate family: {0}")]
    UnsupportedFamily(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (configs, arguments, data files)
    /// as opposed to I/O failures or internal faults.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Config { .. }
                | Error::Parse { .. }
                | Error::NoData(_)
                | Error::UnsupportedFamily(_)
                | Error::UndefinedMean { .. }
        )
    }
}
