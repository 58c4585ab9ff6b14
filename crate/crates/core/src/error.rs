use std::fs::File;
use std::path::Path;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("size limit exceeded for {what}: {actual} > {limit}")]
    SizeLimit {
        what: &'static str,
        limit: u128,
        actual: u128,
    },

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("bad stream magic: expected MBS1, found {0:?}")]
    BadMagic([u8; 4]),

    #[error("truncated stream: header declares {declared} records, file holds {available}")]
    Truncated { declared: u64, available: u64 },

    #[error("ticks not sorted at record {index}: {tick} < {previous}")]
    UnsortedTicks { index: usize, previous: u64, tick: u64 },

    #[error("channel {0} out of range (0-31)")]
    ChannelRange(u8),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("uncalibratable channels (no coincidences at any offset): {0:?}")]
    Uncalibratable(Vec<u8>),

    #[error("insufficient span: {0}")]
    InsufficientSpan(String),

    #[error("undefined likelihood ratio: pattern {0} has zero model probability")]
    UndefinedRatio(String),

    #[error("distribution not normalized: total probability {0}")]
    Unnormalized(f64),

    #[error("stream too short: {0}")]
    TooShort(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// `File::open` with the path in the error message.
pub fn open_file(path: impl AsRef<Path>) -> Result<File> {
    File::open(path.as_ref()).map_err(|e| with_path(e, path.as_ref()))
}

/// `File::create` with the path in the error message.
pub fn create_file(path: impl AsRef<Path>) -> Result<File> {
    File::create(path.as_ref()).map_err(|e| with_path(e, path.as_ref()))
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    std::fs::read_to_string(path.as_ref()).map_err(|e| with_path(e, path.as_ref()))
}
