use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("parameter out of range: {0}")]
    Range(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("scenario too large: {0} deterministic strategies exceed the limit {1}")]
    TooLarge(f64, f64),
    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of a numerical solver (as opposed to bad input).
    pub fn is_solver(&self) -> bool {
        matches!(self, Error::Solver(_))
    }
}
