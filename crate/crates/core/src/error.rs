use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CicError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("malformed image: {0}")]
    MalformedImage(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported dimensions: {0}")]
    UnsupportedDimensions(String),

    #[error("malformed bitstream: {0}")]
    MalformedBitstream(String),

    #[error("codec failure: {0}")]
    CodecFailure(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("non-finite probe response at coordinate {0}")]
    NonFiniteProbe(usize),

    #[error("mean slope is zero; contraction interval undefined")]
    MuZero,

    #[error("zero dimension or bit count in rate computation")]
    ZeroDimension,

    #[error("empty dataset: no readable images in {0}")]
    EmptyDataset(PathBuf),

    #[error(transparent)]
    Bridge(#[from] crate::bridge::BridgeError),
}

pub type Result<T, E = CicError> = std::result::Result<T, E>;
