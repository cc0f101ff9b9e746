use std::path::PathBuf;

use crate::datamodel::MembershipLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: record '{id}': {field}: {message}")]
    Invalid {
        line: usize,
        id: String,
        field: &'static str,
        message: String,
    },

    #[error("line {line}: duplicate id '{id}'")]
    DuplicateId { line: usize, id: String },

    #[error("record '{id}' has label {found} but was supplied as {expected}")]
    WrongClass {
        id: String,
        expected: MembershipLabel,
        found: MembershipLabel,
    },

    #[error("insufficient {class} records: need {needed}, have {available}")]
    InsufficientRecords {
        class: MembershipLabel,
        needed: usize,
        available: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vocabulary is empty after tokenization")]
    EmptyVocab,

    #[error("example '{id}' has no per-step moments (step_mu/step_sigma)")]
    MissingMoments { id: String },

    #[error("example '{id}' has no usable paraphrase variants")]
    NoVariants { id: String },

    #[error("example '{id}' expects {expected} paraphrase variants but only {found} were scored")]
    MissingVariants { id: String, expected: usize, found: usize },

    #[error("paraphrase record '{id}' does not match any original")]
    UnknownId { id: String },

    #[error("paraphrase record '{id}' has {count} variants; allowed range is 1..=3")]
    VariantCount { id: String, count: usize },

    #[error("id '{id}' has no membership label")]
    UnlabeledId { id: String },

    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("scores contain only one class; need at least one member and one nonmember")]
    SingleClass,

    #[error("non-finite score for '{id}'")]
    NonFiniteScore { id: String },

    #[error(transparent)]
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
