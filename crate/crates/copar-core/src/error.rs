//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, estimation, evaluation and forecasting.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CoparError {
    /// A caller-supplied argument is invalid (wrong length, out of range, inconsistent).
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A parameter value lies outside the domain of its family.
    #[error("parameter out of domain: {0}")]
    Domain(String),
    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Estimation failed (degenerate data, singular design, no admissible optimum).
    #[error("fit failed: {0}")]
    Fit(String),
    /// Input data could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CoparError>;

impl CoparError {
    pub fn argument(msg: impl Into<String>) -> Self {
        CoparError::Argument(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        CoparError::Domain(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        CoparError::Numerical(msg.into())
    }
    pub fn fit(msg: impl Into<String>) -> Self {
        CoparError::Fit(msg.into())
    }
    pub fn parse(msg: impl Into<String>) -> Self {
        CoparError::Parse(msg.into())
    }
}
