use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is not Hermitian: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    NonHermitianInput { residual: f64, tolerance: f64 },

    #[error("invalid exponent p = {0}; only p >= 1 (or infinity) is supported")]
    InvalidExponent(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("level {level} is outside the admissible range {min}..={max}")]
    LevelOutOfRange { level: u32, min: u32, max: u32 },

    #[error("level order violated: need k < n, got k = {k}, n = {n}")]
    LevelOrderViolation { k: u32, n: u32 },

    #[error("field is not positive semidefinite at cell {cell} (smallest eigenvalue {min_eigenvalue:.3e})")]
    NonPositiveField { cell: usize, min_eigenvalue: f64 },

    #[error("sign sequence entry at level {level} has |nu| = {value} > 1")]
    SignOutOfRange { level: u32, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed field container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
