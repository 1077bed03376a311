use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}: input is empty")]
    EmptyInput(&'static str),

    #[error("safety score {0} is outside [0, 1]")]
    InvalidScore(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },

    #[error("set {id:?} is only partially scored")]
    PartialScores { id: String },

    #[error("set {id:?} has no scores")]
    Unscored { id: String },

    #[error("set {id:?} has no paraphrases")]
    NoParaphrases { id: String },

    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no feature vector for text {text:?}")]
    MissingFeature { text: String },

    #[error("no training sets left after filtering")]
    EmptyAfterFilter,

    #[error("validation data contains a single class; temperature is not identifiable")]
    SingleClass,

    #[error("pair {index} has no gold similarity")]
    MissingGold { index: usize },

    #[error("report serialization failed: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
