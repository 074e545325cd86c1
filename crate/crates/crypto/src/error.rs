use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("invalid code parameters: {0}")]
    InvalidCode(String),
    #[error("decoded error pattern has weight {weight}, beyond capacity {capacity}")]
    DecodeFailure { weight: u32, capacity: u32 },
    #[error("sketch has {actual} bits, code expects {expected}")]
    SketchLength { expected: usize, actual: usize },
    #[error("malformed sketch encoding")]
    MalformedSketch,
    #[error("invalid group element")]
    InvalidElement,
    #[error("invalid scalar")]
    InvalidScalar,
    #[error("expected {expected} items, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("bucket is empty")]
    EmptyBucket,
}

pub type Result<T> = std::result::Result<T, CryptoError>;
