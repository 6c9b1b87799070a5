//! Error type shared by the whole crate.

/// Errors surfaced by construction, sampling, training and I/O.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid volume: {0}")]
    Volume(String),
    #[error("invalid image: {0}")]
    Image(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid mask: {0}")]
    Mask(String),
    #[error("invalid phantom: {0}")]
    Phantom(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("sampling failed at step {step}: {reason}")]
    Sampler { step: usize, reason: String },
    #[error("training failed at step {step}: {reason}")]
    Training { step: usize, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
