//! Crate-wide error type.

use thiserror::Error;

/// Coarse grouping used by callers (e.g. the CLI) to map failures onto
/// exit codes without matching every variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Problems with input data or invalid arguments derived from it.
    Data,
    /// The optimization problem has no solution (or the solver gave up).
    Infeasible,
    /// A deliberate guard refused to run a configuration.
    Guard,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed row {row}: {detail}")]
    MalformedRow { row: usize, detail: String },
    #[error("non-numeric performance in row {row}, column {column}: {value:?}")]
    NonNumericPerformance {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-integer label in row {row}: {value:?}")]
    NonIntegerLabel { row: usize, value: String },
    #[error("missing label in row {row}")]
    MissingLabel { row: usize },
    #[error("fewer than 2 classes present (found {found})")]
    TooFewClasses { found: usize },
    #[error("duplicate alternative identifier {id:?}")]
    DuplicateId { id: String },
    #[error("degenerate criterion {name:?}: column is constant")]
    DegenerateCriterion { name: String },
    #[error("class {class} has only {size} members, too small for {k} folds")]
    ClassTooSmall { class: usize, size: usize, k: usize },
    #[error(
        "inconsistent data under d>=0: no nonnegative margin separates class {lower} from class {upper}"
    )]
    Inconsistent { lower: usize, upper: usize },
    #[error("{0}")]
    Guard(String),
    #[error("{0}")]
    Invalid(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Inconsistent { .. } | Error::Solver(_) => ErrorCategory::Infeasible,
            Error::Guard(_) => ErrorCategory::Guard,
            _ => ErrorCategory::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
