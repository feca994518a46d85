use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown topic id `{topic_id}` (line {line})")]
    UnknownTopic { topic_id: String, line: usize },

    #[error("unknown aspect `{0}`")]
    UnknownAspect(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("model backend: {0}")]
    Backend(String),

    #[error("model `{model}` lacks capability `{capability}`")]
    MissingCapability { model: String, capability: &'static str },

    #[error("scorer `{scorer}` failed: {message}")]
    Scorer { scorer: String, message: String },

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
