use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("unknown type id `{0}`")]
    UnknownType(String),

    #[error("requested {requested} mentions but only {available} are available")]
    InsufficientMentions { requested: usize, available: usize },

    #[error("label `{label}` has {available} mentions, fewer than k = {k}")]
    InsufficientShots {
        label: String,
        available: usize,
        k: usize,
    },

    #[error("invalid knowledge-base record: {0}")]
    InvalidRecord(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported encoder `{0}`")]
    UnsupportedEncoder(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite loss {loss} at step {step} (batch {batch})")]
    NonFiniteLoss { loss: f64, step: usize, batch: usize },

    #[error("sentences from a held-out test partition reached training ({0})")]
    TestLeak(String),
}

impl Error {
    /// Errors caused by bad inputs or configuration, as opposed to failures
    /// while a run was executing.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::NonFiniteLoss { .. } | Error::TestLeak(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
