use plantar_autodiff::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no gait events: {0}")]
    NoEvents(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("segment too short: {len} frames, need at least {min}")]
    SegmentTooShort { len: usize, min: usize },
    #[error("size error: {0}")]
    Size(String),
    #[error("degenerate histogram: map has fewer than two distinct values")]
    DegenerateHistogram,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("NRMSE undefined for channel {channel}: target range is zero")]
    UndefinedMetric { channel: usize },
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch} (non-finite loss); last good checkpoint attached")]
    Diverged {
        epoch: usize,
        last_good: Box<crate::io::Checkpoint>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("unsupported version: file is v{found}, reader supports v{supported}")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
