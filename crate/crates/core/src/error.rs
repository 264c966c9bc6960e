use thiserror::Error;

/// Errors raised by data loading, model construction and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        /// 1-based line number in the source file (header is line 1).
        row: usize,
        /// 1-based column number, 0 when the whole row is at fault.
        column: usize,
        message: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The problem data violates a modelling precondition (e.g. non-PSD Hessian).
    #[error("model error: {0}")]
    Model(String),

    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
