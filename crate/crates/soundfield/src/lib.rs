//! Ambisonic sound fields: spherical harmonics, encoding and rotation,
//! STFT masking, spatial audio metrics, and a self-supervised upmixer
//! that learns to turn mono recordings into first-order ambisonics
//! (and FOA into second-order).

pub mod audio;
pub mod autodiff;
pub mod metrics;
pub mod scenes;
pub mod spatializer;
pub mod sphmath;
pub mod stft;
pub mod wav;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sampling: need at least one point")]
    EmptySampling,
    #[error("unsupported ambisonic order {0}")]
    UnsupportedOrder(usize),
    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("signal mismatch: {0}")]
    SignalMismatch(String),
    #[error("input too short: {len} samples, need at least {min}")]
    InputTooShort { len: usize, min: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("malformed WAV: {0}")]
    Wav(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("degenerate prior: c_w is zero")]
    DegeneratePrior,
    #[error("unknown model variant `{0}`")]
    UnknownVariant(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
