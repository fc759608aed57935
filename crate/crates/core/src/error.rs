//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A row or field of an input file failed validation.
    /// `line` is 1-based and counts the header.
    #[error("{file}:{line}: {field}: {message}")]
    Ingest {
        file: String,
        line: u64,
        field: String,
        message: String,
    },

    #[error("dataset is empty after cold-start filtering")]
    EmptyAfterFilter,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("text corpus is empty after preprocessing")]
    EmptyCorpus,

    #[error("topic count {k} exceeds vocabulary size {v}")]
    TooManyTopics { k: usize, v: usize },

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unknown similarity metric `{0}`")]
    UnknownMetric(String),

    #[error("metric {metric} cannot score {items} items")]
    MetricMismatch {
        metric: &'static str,
        items: &'static str,
    },

    #[error("relation {relation} expects ({expected_head}, {expected_tail}), got ({head}, {tail})")]
    BadTripleSignature {
        relation: &'static str,
        expected_head: &'static str,
        expected_tail: &'static str,
        head: &'static str,
        tail: &'static str,
    },

    #[error("similarity relation {relation} may not loop entity {entity} onto itself")]
    SimilaritySelfLoop { relation: &'static str, entity: u32 },

    #[error("duplicate triple ({head}, {relation}, {tail})")]
    DuplicateTriple {
        head: u32,
        relation: &'static str,
        tail: u32,
    },

    #[error("unknown entity id {0}")]
    UnknownEntity(u32),

    #[error("entity {id} has kind {kind}, expected {expected}")]
    WrongEntityKind {
        id: u32,
        kind: &'static str,
        expected: &'static str,
    },

    #[error("unknown {what} `{id}`")]
    UnknownId { what: &'static str, id: String },

    #[error("{file}: {message}")]
    MalformedFile { file: String, message: String },

    #[error("checkpoint {file}: {message}")]
    BadCheckpoint { file: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot aggregate an empty neighborhood")]
    EmptyNeighborhood,

    #[error("non-finite {what} at {context}")]
    NonFinite { what: &'static str, context: String },

    #[error("user `{user}` has {count} interactions; at least {min} are required to split")]
    TooFewInteractions {
        user: String,
        count: usize,
        min: usize,
    },

    #[error("top-K cutoff must be positive")]
    ZeroCutoff,

    #[error("relevant set is empty")]
    EmptyRelevantSet,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Convenience constructor for per-field ingest failures.
    pub fn ingest(
        file: impl Into<String>,
        line: u64,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Ingest {
            file: file.into(),
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}
