//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// KL and ratio computations require matching families and bounds.
    #[error("distribution family mismatch: {0}")]
    FamilyMismatch(String),

    /// Action outside the support (or support interior) of a distribution.
    #[error("action out of support: {0}")]
    OutOfSupport(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty sample batch")]
    EmptyBatch,

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Inner optimization did not reach the requested gradient norm.
    #[error("no convergence: final gradient norm {grad_norm:e}")]
    NoConvergence { grad_norm: f64 },
}
