use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ArcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ArcError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}, line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ArcError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        ArcError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ArcError::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ArcError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 2 for I/O
    /// failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ArcError::Io { .. } => 2,
            _ => 1,
        }
    }
}
