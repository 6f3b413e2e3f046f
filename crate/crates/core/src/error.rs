use thiserror::Error;

/// Errors produced by the pruning engine and the fixture container.
#[derive(Debug, Error)]
pub enum AtpError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("zero-norm vector: {0}")]
    ZeroNorm(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate attention: {0}")]
    DegenerateAttention(&'static str),

    #[error("not a fixture container")]
    NotAContainer,

    #[error("unsupported container version {0} (expected 1)")]
    UnsupportedVersion(u32),

    #[error("corrupt container: {0}")]
    Corrupt(String),

    #[error("validation failed for tensor `{tensor}`: {reason}")]
    Validation { tensor: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AtpError>;
