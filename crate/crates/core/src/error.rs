use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the audit library.
///
/// Variants are grouped by [`ErrorClass`] so callers (the CLI in particular)
/// can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("row {row}, column `{column}`: non-numeric value `{value}`")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: outcome {value} is not in {{0, 1}} for a binary task")]
    InvalidOutcome { row: usize, value: f64 },
    #[error("group {0} has no rows")]
    EmptyGroup(usize),
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{kind} requires a {required} task")]
    TaskMismatch { kind: &'static str, required: &'static str },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty subset: {0}")]
    EmptySubset(String),
    #[error("at least {needed} evaluable groups required, found {found}")]
    InsufficientGroups { needed: usize, found: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Unsupported(String),
}

/// Coarse error categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or unreadable input data.
    Data,
    /// Invalid parameters.
    Config,
    /// The analysis itself could not be carried out.
    Analysis,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. }
            | Error::Csv { .. }
            | Error::MissingColumn(_)
            | Error::DuplicateColumn(_)
            | Error::NonNumeric { .. }
            | Error::MissingValue { .. }
            | Error::InvalidOutcome { .. }
            | Error::EmptyGroup(_)
            | Error::InvalidData(_) => ErrorClass::Data,
            Error::Schema(_) | Error::InvalidArgument(_) => ErrorClass::Config,
            Error::TaskMismatch { .. }
            | Error::DimensionMismatch { .. }
            | Error::EmptySubset(_)
            | Error::InsufficientGroups { .. }
            | Error::Numerical(_)
            | Error::Unsupported(_) => ErrorClass::Analysis,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
