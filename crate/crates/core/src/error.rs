//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing <think> tag in response")]
    MissingThinkTag,
    #[error("missing <answer> tag in response")]
    MissingAnswerTag,
    #[error("malformed tag nesting: closing </{0}> precedes its opening tag")]
    MalformedNesting(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown entity type `{0}`")]
    UnknownEntityType(String),
    #[error("unknown relation type `{0}`")]
    UnknownRelationType(String),
    #[error("advantage group must contain at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("token `{0}` not in policy vocabulary")]
    UnknownToken(String),
    #[error("non-finite gradient at step {step}: {detail}")]
    NonFiniteGradient { step: usize, detail: String },
    #[error("empty answer: cannot length-normalize zero tokens")]
    EmptyAnswer,
    #[error("record `{id}` is missing a `{modality}` embedding")]
    MissingEmbedding { id: String, modality: String },
    #[error("embedding dimension mismatch for modality {modality}: {a} vs {b}")]
    DimensionMismatch { modality: String, a: usize, b: usize },
    #[error("top-k depth {k} exceeds candidate pool size {pool}")]
    KTooLarge { k: usize, pool: usize },
    #[error("no candidate response for record `{0}`")]
    MissingCandidate(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable discriminant for CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingThinkTag => "MissingThinkTag",
            Error::MissingAnswerTag => "MissingAnswerTag",
            Error::MalformedNesting(_) => "MalformedNesting",
            Error::Parse { .. } => "ParseError",
            Error::DuplicateId(_) => "DuplicateId",
            Error::UnknownEntityType(_) => "UnknownEntityType",
            Error::UnknownRelationType(_) => "UnknownRelationType",
            Error::GroupTooSmall(_) => "GroupTooSmall",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::UnknownToken(_) => "UnknownToken",
            Error::NonFiniteGradient { .. } => "NonFiniteGradient",
            Error::EmptyAnswer => "EmptyAnswer",
            Error::MissingEmbedding { .. } => "MissingEmbedding",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::MissingCandidate(_) => "MissingCandidate",
            Error::Config(_) => "ConfigError",
            Error::Io { .. } => "IoError",
        }
    }
}
