use std::fmt;

/// Errors raised by tensor construction, forward ops and the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Operand shapes are incompatible for the named op.
    ShapeMismatch { op: &'static str, detail: String },
    /// The requested extents overflow the addressable size.
    SizeOverflow { shape: Vec<usize> },
    /// A forward op produced NaN or Inf from finite inputs.
    NonFinite { op: &'static str },
    /// Axis index out of range for the tensor's rank.
    InvalidAxis { op: &'static str, axis: usize, rank: usize },
    /// A class label lies outside `[0, classes)`.
    LabelOutOfRange { label: usize, classes: usize },
    /// Batch statistics were requested over zero elements.
    DegenerateBatch { op: &'static str },
    /// `backward` was called on a non-scalar tensor.
    NonScalarLoss { shape: Vec<usize> },
    /// A gradient-check probe evaluated the function to a non-finite value.
    NonFiniteEval,
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, detail } => {
                write!(f, "shape mismatch in {op}: {detail}")
            }
            TensorError::SizeOverflow { shape } => {
                write!(f, "tensor extents {shape:?} overflow the addressable size")
            }
            TensorError::NonFinite { op } => {
                write!(f, "op {op} produced a non-finite value")
            }
            TensorError::InvalidAxis { op, axis, rank } => {
                write!(f, "axis {axis} out of range for rank {rank} in {op}")
            }
            TensorError::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            TensorError::DegenerateBatch { op } => {
                write!(f, "{op}: batch statistics over zero elements")
            }
            TensorError::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            TensorError::NonFiniteEval => {
                write!(f, "function evaluated to a non-finite value during gradient check")
            }
        }
    }
}

impl std::error::Error for TensorError {}

pub type Result<T> = std::result::Result<T, TensorError>;
