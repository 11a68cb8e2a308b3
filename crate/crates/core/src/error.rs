use thiserror::Error;

pub type Result<T> = std::result::Result<T, SpinError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("vertex {vertex} cannot take value {value}")]
    Domain { vertex: usize, value: usize },

    #[error("inconsistent pinning: {0}")]
    Consistency(String),

    #[error("infeasible system: {0}")]
    Infeasible(String),

    #[error("state space of size {states} exceeds cap {cap}")]
    SizeCap { states: f64, cap: u64 },

    #[error("vertex {vertex} has no admissible spin given its neighbourhood")]
    FrozenState { vertex: usize },

    #[error("partition construction failed after {rounds} rounds over {copies} copies")]
    Construction { rounds: u64, copies: usize },

    #[error("depth cap {cap} exceeded")]
    DepthCap { cap: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl SpinError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SpinError::Invalid(msg.into())
    }

    /// True for errors that stem from a zero-weight (infeasible) model.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, SpinError::Infeasible(_) | SpinError::FrozenState { .. })
    }
}
