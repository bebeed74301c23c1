// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("operator A_{index} is singular (reconstruction error {residual:e})")]
    SingularOperator { index: i64, residual: f64 },

    #[error("contraction condition {condition} violated at n = {index} (value {value})")]
    ContractionViolation {
        condition: &'static str,
        index: i64,
        value: f64,
    },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("series window exhausted at n = {n}: half-width {half_width}, tail bound {tail:e} above target {target:e}")]
    WindowExhausted {
        n: i64,
        half_width: u32,
        tail: f64,
        target: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable tag, used in reports and by the C interface.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SingularOperator { .. } => "singular_operator",
            Error::ContractionViolation { .. } => "contraction_violation",
            Error::NoConvergence { .. } => "no_convergence",
            Error::WindowExhausted { .. } => "window_exhausted",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Numerical(_) => "numerical",
        }
    }
}
