use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: empty sequence")]
    EmptySequence { op: &'static str },

    #[error("index {index} out of range for {what} with {len} entries")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checksum mismatch in {0}")]
    Checksum(PathBuf),

    #[error("format version mismatch in {path}: expected {expected}, found {found}")]
    Version {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
