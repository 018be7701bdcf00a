use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("group too large: closure exceeds cap of {cap} elements")]
    GroupTooLarge { cap: usize },

    #[error("index {index} out of range for degree {degree}")]
    IndexOutOfRange { index: usize, degree: usize },

    #[error("not a subgroup: {0}")]
    NotSubgroup(String),

    #[error("invalid coset system: {0}")]
    InvalidCosetSystem(String),

    #[error("non-finite value in input")]
    NonFinite,

    #[error("enumeration budget exceeded ({cells} cells > {budget}); use the monte_carlo estimator instead")]
    BudgetExceeded { cells: u128, budget: u128 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
