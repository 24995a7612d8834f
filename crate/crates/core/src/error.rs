use thiserror::Error;

/// Errors surfaced by the simulator, the solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("state space has {states} states, above the budget of {budget}")]
    BudgetExceeded { states: u64, budget: u64 },

    #[error("relative value iteration did not converge in {iterations} sweeps (span residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("singular system while evaluating policy")]
    Singular,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Error {
    /// Whether the error comes from bad input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Usage(_) | Error::Toml(_) | Error::BudgetExceeded { .. })
    }
}
