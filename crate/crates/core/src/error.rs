//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has (near-)zero norm")]
    ZeroVector,

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("empty direction set")]
    EmptySet,

    #[error("every point projected degenerately on every circle")]
    AllPointsDegenerate,

    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },

    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("index contains no keys")]
    EmptyIndex,

    #[error("datastore contains no keys")]
    EmptyStore,

    #[error("no retrieval hits to vote with")]
    EmptyHits,

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("partition has no clusters or no elements")]
    EmptyPartition,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mismatched configurations: {0}")]
    ConfigMismatch(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
