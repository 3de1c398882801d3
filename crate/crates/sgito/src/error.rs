//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, malformed inputs, or violated preconditions.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Not enough observations to run the requested computation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A numerical procedure failed (non-convergence, overflow, degeneracy).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A matrix factorization was rejected (non-PD or condition number too large).
    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

impl Error {
    /// Process exit code for the CLI: 1 for validation/input problems,
    /// 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::InsufficientData(_) | Error::Io(_) | Error::Parse { .. } => 1,
            Error::Numerical(_) | Error::Singular(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
