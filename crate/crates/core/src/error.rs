use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimators, generators and file layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch at column {column}: {reason}")]
    SchemaMismatch { column: String, reason: String },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("column {column} has fewer than {bins} distinct values")]
    TooFewDistinctValues { column: String, bins: usize },

    #[error("axis {0} is not available")]
    MissingAxis(String),

    #[error("axis {0} refers to a continuous column; discretize first")]
    ContinuousAxis(String),

    #[error("probability table with {0} cells exceeds the materialization guard")]
    TableTooLarge(usize),

    #[error("{candidates} candidate index sets exceed the search guard of {limit}")]
    TooManyCandidates { candidates: u128, limit: u128 },

    #[error("confusion matrix is numerically singular (condition number {0:e})")]
    SingularConfusion(f64),

    #[error("kernel bandwidth is zero")]
    DegenerateKernel,

    #[error("ground truth does not include a target accuracy")]
    MissingTruth,

    #[error("cell {0} has positive target mass but no matching base rows")]
    EmptyCell(String),

    #[error("prediction file has {found} rows, dataset has {expected}")]
    RowCountMismatch { expected: usize, found: usize },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable, machine-parsable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::SchemaMismatch { .. } => "SCHEMA_MISMATCH",
            Error::InvalidSchema(_) => "INVALID_SCHEMA",
            Error::InvalidDataset(_) => "INVALID_DATASET",
            Error::TooFewDistinctValues { .. } => "TOO_FEW_DISTINCT_VALUES",
            Error::MissingAxis(_) => "MISSING_AXIS",
            Error::ContinuousAxis(_) => "CONTINUOUS_AXIS",
            Error::TableTooLarge(_) => "TABLE_TOO_LARGE",
            Error::TooManyCandidates { .. } => "TOO_MANY_CANDIDATES",
            Error::SingularConfusion(_) => "SINGULAR_CONFUSION",
            Error::DegenerateKernel => "DEGENERATE_KERNEL",
            Error::MissingTruth => "MISSING_TRUTH",
            Error::EmptyCell(_) => "EMPTY_CELL",
            Error::RowCountMismatch { .. } => "ROW_COUNT_MISMATCH",
            Error::MalformedRow { .. } => "MALFORMED_ROW",
            Error::FileNotFound(_) => "FILE_NOT_FOUND",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::Io(_) => "IO",
            Error::Csv(_) => "MALFORMED_CSV",
            Error::Json(_) => "MALFORMED_JSON",
        }
    }

    /// Whether the failure is attributable to user input (exit code 2) rather
    /// than an internal fault (exit code 1).
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
