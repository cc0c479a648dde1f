use thiserror::Error;

use crate::control::ControlTuple;
use crate::properties::PropertyReport;

pub type Result<T> = std::result::Result<T, DpError>;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("control {control} is not feasible at state {state}")]
    Infeasible { state: usize, control: ControlTuple },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("weight at index {index} must be strictly positive, got {value}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("initial condition T_mu J <= J violated at state {state} by {excess:e}")]
    InitialCondition { state: usize, excess: f64 },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("asynchronous runs require a checked initial condition; pass force to override")]
    UncheckedAsyncStart,

    #[error("policy enumeration refused: {count} policies exceeds cap {cap}")]
    PolicyCapExceeded { count: u128, cap: u128 },

    #[error("policy {policy:?} is improper: state {state} cannot reach the destination")]
    ImproperPolicy { policy: Vec<usize>, state: usize },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("singular policy evaluation system")]
    Singular,

    #[error("internal check failed: {0}")]
    Internal(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("model validation failed with {} violation(s): {}", .0.violations.len(), .0.summary())]
    Validation(Box<PropertyReport>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
