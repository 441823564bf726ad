use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    /// A layer was handed data whose shape does not fit its spec.
    #[error("layer `{layer}`: {message}")]
    Config { layer: String, message: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite loss ({value}) at {context}")]
    NonFinite { value: f64, context: String },

    #[error("unknown parameter segment `{0}`")]
    UnknownSegment(String),

    #[error("empty batch")]
    EmptyBatch,
}

impl NnError {
    pub(crate) fn config(layer: impl Into<String>, message: impl Into<String>) -> Self {
        NnError::Config {
            layer: layer.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
