use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image is {width}x{height}; hashing needs at least 64x64")]
    ImageTooSmall { width: usize, height: usize },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    PixelCount { expected: usize, actual: usize },
    #[error("bit vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("malformed hash: {0}")]
    MalformedHash(String),
    #[error("malformed PGM: {0}")]
    MalformedPgm(String),
    #[error("cannot sample {d} indices out of {ell}")]
    DTooLarge { d: usize, ell: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("correctness bound inapplicable: {0}")]
    BoundInapplicable(String),
    #[error("input is empty: {0}")]
    Empty(&'static str),
    #[error("distribution has no support")]
    EmptySupport,
    #[error("no positive labels among scored requests")]
    NoPositives,
    #[error("scored requests contain a single class")]
    SingleClass,
    #[error("invalid record at line {line}: {reason}")]
    Record { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
