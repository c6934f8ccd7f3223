use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain mismatch: field lives on `{found}`, expected `{expected}`")]
    DomainMismatch { expected: String, found: String },

    #[error("field has {found} values but the discretization has {expected} nodes")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular evaluation: {0}")]
    Singular(String),

    /// Two independent estimates of the same quantity disagree, or an
    /// extrapolation did not settle.
    #[error("accuracy failure: {what} (estimates {first:.6e} and {second:.6e}, tolerance {tolerance:.1e})")]
    Accuracy {
        what: String,
        first: f64,
        second: f64,
        tolerance: f64,
    },

    #[error("mesh quality: {0}")]
    MeshQuality(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
