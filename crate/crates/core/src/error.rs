use thiserror::Error;

use crate::scenario::ScenarioError;

/// Errors raised by model construction and the analysis pipelines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (bad index, stage, radius...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested computation exceeds a configured size budget.
    #[error("resource guard: {what} requires {required} but the budget is {budget}")]
    ResourceGuard {
        what: &'static str,
        required: u128,
        budget: u128,
    },

    /// A value produced or supplied breaks a stated invariant.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
