use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty window: {0}")]
    EmptyWindow(&'static str),
    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("single-label dataset: no samples with label {missing}")]
    SingleLabel { missing: u8 },
    #[error("empty group: {0}")]
    EmptyGroup(&'static str),
    #[error("sample weights sum to zero")]
    ZeroWeights,
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("corrupt bit payload: expected {expected} bytes, got {got}")]
    CorruptPayload { expected: usize, got: usize },
    #[error("binarized layer {0} has no packed weights")]
    NotPacked(usize),
}
