//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid label: color {color} at cell {cell} is outside [0, {num_classes})")]
    InvalidLabel {
        color: usize,
        cell: usize,
        num_classes: usize,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("unknown task family: {0}")]
    UnknownTask(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error at pair {index}: {reason}")]
    Validation { index: usize, reason: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing report field: {0}")]
    MissingField(&'static str),

    #[error("task sets are not aligned; missing ids: {0:?}")]
    Alignment(Vec<String>),

    #[error("step {step} out of range (total {total})")]
    OutOfRange { step: usize, total: usize },

    #[error("non-finite loss at step {step} (lr {lr}); recent losses: {tail:?}")]
    NonFiniteLoss { step: usize, lr: f64, tail: Vec<f64> },

    #[error("refusing to overwrite existing output at {0}; pass --force to replace")]
    WouldOverwrite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
