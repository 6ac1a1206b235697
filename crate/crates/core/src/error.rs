use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("index {index} out of range for size {size}")]
    Index { index: usize, size: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corpus {0} contains no valid phrase pairs")]
    EmptyCorpus(PathBuf),

    #[error("sentence has {tokens} tokens, limit is {limit}")]
    Length { tokens: usize, limit: usize },

    #[error("language `{0}` is not registered")]
    UnknownLanguage(String),

    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// Failures specific to checkpoint directories.
#[derive(Debug, Error)]
pub enum PersistError {
    #[error("unsupported or unrecognized checkpoint version: {0}")]
    Version(String),

    #[error("truncated parameter blob: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("manifest inconsistent with stored data: {0}")]
    Consistency(String),

    #[error("malformed manifest: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
