use thiserror::Error;

/// Errors raised by the rotation-group primitives and the Galerkin pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not antisymmetric: |S + S^T|_F = {defect:.3e}")]
    NotAntisymmetric { defect: f64 },

    #[error("argument out of range: {what}")]
    OutOfRange { what: String },

    #[error("matrix is not symmetric positive definite: {what}")]
    NotSpd { what: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("policy produced a non-finite control at step {step}")]
    NonFiniteControl { step: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
