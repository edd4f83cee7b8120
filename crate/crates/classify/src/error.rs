use thiserror::Error;

pub type Result<T> = std::result::Result<T, ClassifyError>;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("pattern {0} is not scope-eligible")]
    NotScopeEligible(String),

    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),

    #[error("fold too small: {0}")]
    FoldTooSmall(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Core(#[from] slicemine_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
