use std::fmt;

use avsr_autodiff::TensorError;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// An underlying tensor op failed.
    Tensor(TensorError),
    /// Configuration violates a profile invariant.
    Config(String),
    /// Probability rows are malformed (do not sum to one).
    Probability(String),
    /// A parameter snapshot is missing entries or has incompatible shapes.
    Checkpoint(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Tensor(e) => write!(f, "{e}"),
            ModelError::Config(msg) => write!(f, "invalid model config: {msg}"),
            ModelError::Probability(msg) => write!(f, "malformed probabilities: {msg}"),
            ModelError::Checkpoint(msg) => write!(f, "checkpoint incompatible: {msg}"),
        }
    }
}

impl std::error::Error for ModelError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ModelError::Tensor(e) => Some(e),
            _ => None,
        }
    }
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        ModelError::Tensor(e)
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;
