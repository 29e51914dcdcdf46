use thiserror::Error;

/// Errors raised by the trading engine's numerical primitives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TradeError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("infeasible trade: {0}")]
    Infeasible(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("grid too large: {points} points exceeds limit {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("vacuous bound: {0}")]
    VacuousBound(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, TradeError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(TradeError::Dimension { expected, got })
    }
}
