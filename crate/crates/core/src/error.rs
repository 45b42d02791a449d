//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {value} out of range on axis {axis} (size {size})")]
    OutOfRange {
        axis: usize,
        value: usize,
        size: usize,
    },

    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("empty accumulator: no samples were recorded")]
    EmptyAccumulator,

    #[error("model is not rebalanced: {0}")]
    NotRebalanced(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("enumeration budget exceeded: {needed} needed, budget {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("state not reachable at stage {stage}")]
    UnreachableState { stage: usize },

    #[error("degenerate relaxed objective: both F and the linear term vanish")]
    DegenerateObjective,

    #[error("model file error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
