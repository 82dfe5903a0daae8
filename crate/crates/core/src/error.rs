use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: no samples found")]
    EmptyInput,

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("line {line}: field {field} is not a number: {value:?}")]
    Parse { line: usize, field: usize, value: String },

    #[error("unsupported class label {0} (expected -1/1 or 0/1)")]
    UnsupportedLabel(i64),

    #[error("cannot split {0} samples into two equal halves")]
    Split(usize),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("cubic spline needs at least 4 knots, got {0}")]
    Interpolation(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: i64, classes: usize },

    #[error("non-finite gradient in parameter group {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("cache mismatch: {0}")]
    Cache(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
