use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed record: expected dimension {expected}, found {found} at record {record}")]
    DimMismatch {
        expected: usize,
        found: usize,
        record: usize,
    },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("invalid dimension {0}")]
    InvalidDim(i64),
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("k = {k} exceeds dataset size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    BadVersion(u32),
}

pub type Result<T> = std::result::Result<T, Error>;
