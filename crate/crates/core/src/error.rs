use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset is empty after filtering (min_user={min_user}, min_item={min_item})")]
    EmptyDataset { min_user: usize, min_item: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot split {users} test users into {epochs} non-empty epochs")]
    TooManyEpochs { users: usize, epochs: usize },

    #[error("training diverged at sweep {sweep}: non-finite factor values")]
    Diverged { sweep: usize },

    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: u64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("unknown algorithm `{label}`; known algorithms: {known}")]
    UnknownAlgorithm { label: String, known: String },

    #[error("algorithm `{0}` is out of scope for this implementation")]
    OutOfScope(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("run `{config}` failed: {source}")]
    Run {
        config: String,
        #[source]
        source: Box<Error>,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
