use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not conform.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A scalar or structural argument is out of its admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// An index sequence is not a permutation.
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    /// The precoder chain has zero norm and cannot be power-scaled.
    #[error("degenerate precoder: {0}")]
    DegeneratePrecoder(String),
    /// A system configuration violates its invariants.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
