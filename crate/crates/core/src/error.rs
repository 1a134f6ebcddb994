use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no interactions")]
    NoInteractions,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("need {needed} candidate items but only {available} are available")]
    InsufficientCandidates { needed: usize, available: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("lists have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("recommendation list is empty")]
    EmptyList,
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("non-finite loss at probe {probe}")]
    NonFiniteLoss { probe: usize },
    #[error("query budget of {budget} exhausted")]
    BudgetExhausted { budget: usize },
    #[error("query budget exhausted after {queried} of {requested} users")]
    QueryPassAborted { queried: usize, requested: usize },
    #[error("popularity pool has {available} eligible items, {needed} needed")]
    PoolExhausted { needed: usize, available: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for the two errors that stem from running out of oracle budget.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::BudgetExhausted { .. } | Error::QueryPassAborted { .. }
        )
    }
}
