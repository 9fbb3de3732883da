use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} is outside the truncation {{0, ..., {}}}", .truncation.saturating_sub(1))]
    IndexOutOfRange { index: usize, truncation: usize },

    #[error("subset index {0} exceeds the bitset capacity of {cap}", cap = crate::basis::Subset::CAPACITY)]
    CapacityExceeded(usize),

    #[error("truncation level {n} exceeds the cap of {cap} (set CHAOSCALC_MAX_N to raise it)")]
    TruncationTooLarge { n: usize, cap: usize },

    #[error("exact lambda overflows u64; use the floating variant")]
    LambdaOverflow,

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown diagonal operator `{0}`")]
    UnknownDiagonal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
