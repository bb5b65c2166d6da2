use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the SLAM, detection and evaluation layers.
///
/// The variants mirror the failure classes the command line maps onto exit
/// codes: usage (2), I/O (3) and contract violations (4). Domain errors are
/// reported as contract violations by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Input lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Bad user-supplied configuration or arguments.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
