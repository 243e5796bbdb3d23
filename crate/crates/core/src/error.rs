use std::path::PathBuf;

use crate::types::MomentKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("malformed API response: {0}")]
    Protocol(String),

    #[error("empty tag universe: no tagged playbacks to build a vocabulary from")]
    EmptyTagUniverse,

    #[error("no scrobbles in cache {0}")]
    EmptyCache(PathBuf),

    #[error("timestamp join mismatch between tag and feature files: {}", fmt_keys(.0))]
    JoinMismatch(Vec<MomentKey>),

    #[error("malformed dataset file {path}: {reason}")]
    DatasetFormat { path: PathBuf, reason: String },

    #[error("vocabulary mismatch: model vocabulary ({expected} tags) differs from input vocabulary ({actual} tags)")]
    VocabularyMismatch { expected: usize, actual: usize },

    #[error("model file format: {0}")]
    ModelFormat(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid { field, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

fn fmt_keys(keys: &[MomentKey]) -> String {
    keys.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}
