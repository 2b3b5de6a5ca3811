use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("generative model budget exhausted after {used} queries")]
    BudgetExceeded { used: u64 },
    #[error("fallback sampling ran out of budget after {completed} full per-pair rounds")]
    FallbackBudget { completed: u64, used: u64 },
    #[error("degenerate moments: {0}")]
    DegenerateMoments(String),
    #[error("rank deficient second moment: {found} eigenvalues above tolerance, {needed} needed")]
    RankDeficient { found: usize, needed: usize },
    #[error("tensor decomposition failed at component {0}")]
    DecompositionFailed(usize),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
