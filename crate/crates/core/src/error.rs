use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// One or more learners sit at (or beyond) the score ceiling, so `1 - pretest` vanishes.
    #[error("singular denominator (pretest at ceiling) for learner index(es) {indices:?}")]
    Singular { indices: Vec<usize> },

    #[error("invalid scenario: {0}")]
    InvalidSpec(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    /// The requested expectation does not exist under the chosen model.
    #[error("refused: {0}")]
    Refused(String),

    #[error("need at least {needed} learners, got {got}")]
    TooFewLearners { needed: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{0}: dataset is empty")]
    EmptyDataset(PathBuf),

    #[error("learner {learner_id}: {message}")]
    Score { learner_id: String, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
