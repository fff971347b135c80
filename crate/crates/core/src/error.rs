use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("accuracy error: {0}")]
    Accuracy(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("diagnostic error: {0}")]
    Diagnostic(String),
}

impl Error {
    /// True for errors that signal a broken internal identity rather than bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, Error::InvariantViolation(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
