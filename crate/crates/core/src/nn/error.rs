use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: output extent is not a positive integer ({detail})")]
    Extent { op: &'static str, detail: String },

    #[error("backward called without a recorded forward pass")]
    NoForward,

    #[error("non-finite gradient in block `{0}`")]
    NonFiniteGradient(String),

    #[error("label {label} at row {row} is outside [0, {classes})")]
    LabelRange { row: usize, label: usize, classes: usize },
}

impl NnError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NnError::Shape { op, detail: detail.into() }
    }
}
