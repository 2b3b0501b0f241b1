use thiserror::Error;

/// Errors raised by the model, solvers and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KacError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The empty state with no inflow has zero total rate.
    #[error("absorbed state: total event rate is zero")]
    Absorbed,

    #[error("particle cap exceeded: N = {n} > cap {cap} at t = {time}")]
    CapExceeded { n: usize, cap: usize, time: f64 },

    #[error("truncation tail deficit {deficit:e} exceeds tolerance {tolerance:e}")]
    TruncationDeficit { deficit: f64, tolerance: f64 },

    #[error("step size {dt} violates stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("quantity undefined: {0}")]
    Undefined(String),

    #[error("empty sample set")]
    EmptySamples,
}

pub type Result<T> = std::result::Result<T, KacError>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> KacError {
    KacError::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
