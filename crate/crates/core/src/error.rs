use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while reading a dataset from CSV.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot open {path}: {source}")]
    MissingFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("missing value at ({row}, {col})")]
    MissingValue { row: usize, col: usize },
    #[error("non-numeric value {value:?} at ({row}, {col})")]
    NonNumeric {
        row: usize,
        col: usize,
        value: String,
    },
    #[error("unknown label column {0:?}")]
    UnknownLabelColumn(String),
    #[error("dataset is empty")]
    Empty,
    #[error("label column has {0} distinct value(s); at least 2 are required")]
    TooFewClasses(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("forest fit failed: {0}")]
    Fit(String),
    #[error("execution accounting violated: {0}")]
    Accounting(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
