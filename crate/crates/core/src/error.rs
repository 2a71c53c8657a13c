use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("embedding dimension mismatch for `{id}`: expected {expected}, found {found}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("split is empty")]
    EmptySplit,

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("captions without a label: {}", .0.join(", "))]
    MissingLabels(Vec<String>),

    #[error("sample id sets differ: {only_query} id(s) only in query, {only_ref} only in reference (first: `{example}`)")]
    IdMismatch {
        only_query: usize,
        only_ref: usize,
        example: String,
    },

    #[error("inter-class selection needs two different attributes, got `{0}` twice")]
    SameAttribute(String),

    #[error("correlation list violates constraints: {0}")]
    ConstraintViolation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot select {ways} mutually exclusive correlations after {attempts} attempt(s)")]
    InfeasibleSelection { ways: usize, attempts: usize },

    #[error("class `{class}` has {available} eligible support sample(s), need {needed}")]
    InsufficientSupport {
        class: String,
        available: usize,
        needed: usize,
    },

    #[error("class `{class}` has {available} eligible query sample(s), need {needed}")]
    InsufficientQuery {
        class: String,
        available: usize,
        needed: usize,
    },

    #[error("task {index}: construction failed after {attempts} attempt(s): {last}")]
    ConstructionFailed {
        index: usize,
        attempts: usize,
        last: String,
    },

    #[error("{failed} of {total} tasks failed to build (limit is 1%)")]
    SuiteFailed { failed: usize, total: usize },

    #[error("candidate pool is empty")]
    EmptyCandidates,

    #[error("sample `{0}` has no embedding")]
    MissingEmbedding(String),

    #[error("task {task}: predictions missing for {}", .ids.join(", "))]
    Coverage { task: usize, ids: Vec<String> },

    #[error("task {task}: invalid prediction for `{id}`: {reason}")]
    InvalidPrediction {
        task: usize,
        id: String,
        reason: String,
    },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("rank correlation undefined: {0}")]
    Undefined(String),

    #[error("JSON error: {0}")]
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
