use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("participant `{id}` missing from {source_name}")]
    MissingParticipant { id: String, source_name: String },

    #[error("non-finite value at row {row}, column `{column}`")]
    NonFiniteValue { row: usize, column: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("degenerate ratings: {0}")]
    DegenerateRatings(String),

    #[error("value {0} out of range")]
    OutOfRange(f64),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("degenerate landmark configuration at interval {0}")]
    DegenerateConfiguration(usize),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid lexicon pattern `{0}`")]
    InvalidPattern(String),

    #[error("token list is empty")]
    EmptyTokenList,

    #[error("transcript for `{0}` is empty")]
    EmptyTranscript(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("too few groups: need at least {needed}, got {got}")]
    TooFewGroups { needed: usize, got: usize },

    #[error("unpaired records: {0}")]
    UnpairedRecords(String),

    #[error("records carry different feature sets")]
    MixedFeatureSets,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
