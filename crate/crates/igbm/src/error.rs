//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probability table contains a non-positive entry ({value:e} at cell {cell})")]
    NonPositiveProbability { cell: usize, value: f64 },

    #[error("probability table sums to {sum} (must be 1 within {tol:e})")]
    Unnormalized { sum: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("variable count {n} exceeds the exact-enumeration cap {cap}")]
    SizeCap { n: usize, cap: usize },

    #[error("order split l={l} out of range for n={n} (need 1 <= l < n)")]
    OrderOutOfRange { l: usize, n: usize },

    #[error("moment vector is not realizable by a positive distribution")]
    InfeasibleMoments,

    #[error("eta vector maps outside the probability simplex")]
    InvalidMoments,

    #[error("theta exponentiation overflowed to a non-finite value")]
    Overflow,

    #[error("solver did not converge (residual {residual:e} after {iters} iterations)")]
    NoConvergence { residual: f64, iters: usize },

    #[error("matrix block is numerically singular (pivot {pivot:e} below tolerance)")]
    SingularBlock { pivot: f64 },

    #[error("negative input {value} where a non-negative value is required")]
    NegativeInput { value: f64 },

    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("parse error at row {row}, column {col}: {message}")]
    ParseError {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
