use thiserror::Error;

pub type Result<T> = std::result::Result<T, DpError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("non-finite value {value} at state {state}")]
    NonFinite { state: usize, value: f64 },

    #[error("weight at state {state} must be strictly positive and finite, got {value}")]
    InvalidWeight { state: usize, value: f64 },

    #[error("control {control} is not admissible at state {state}")]
    Admissibility { state: usize, control: u32 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("initial condition FV0 < V0 violated at states {states:?}")]
    Precondition { states: Vec<usize> },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("policy enumeration refused: {count} policies exceed the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("internal error: {0}")]
    Internal(String),
}

impl From<serde_json::Error> for DpError {
    fn from(err: serde_json::Error) -> Self {
        DpError::Parse(err.to_string())
    }
}
