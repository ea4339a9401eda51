use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed NIfTI header: {0}")]
    MalformedHeader(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("duplicate case_id {0:?}")]
    DuplicateCaseId(String),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("insufficient seeds: {0}")]
    InsufficientSeeds(String),
    #[error("empty mask")]
    EmptyMask,
    #[error("no valid voxel pairs for co-occurrence")]
    NoValidPairs,
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("scores contain a single class")]
    SingleClass,
    #[error("operation not supported for model kind {0}")]
    UnsupportedModel(String),
    #[error("both masks are empty")]
    BothEmpty,
    #[error("case {case_id}: {source}")]
    Case {
        case_id: String,
        #[source]
        source: Box<Error>,
    },
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

    pub(crate) fn parse(row: usize, column: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            row,
            column: column.into(),
            message: message.into(),
        }
    }

    pub fn in_case(self, case_id: &str) -> Self {
        Error::Case {
            case_id: case_id.to_string(),
            source: Box::new(self),
        }
    }

    /// True for failures of a numerical routine rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DegenerateInput(_)
            | Error::InsufficientSeeds(_)
            | Error::EmptyMask
            | Error::NoValidPairs
            | Error::SingleClassTraining
            | Error::SingleClass
            | Error::BothEmpty => true,
            Error::Case { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
