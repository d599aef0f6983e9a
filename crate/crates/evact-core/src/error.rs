//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by event I/O, validation, and the slicing algorithms.
#[derive(Debug, Error)]
pub enum EvactError {
    /// A file header or record layout does not match the declared format.
    #[error("format error: {0}")]
    Format(String),

    /// Input data violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Eq. for the difference rate is undefined on an empty parent.
    #[error("degenerate split: parent slice has zero events")]
    DegenerateSplit,

    /// Tensor operands have incompatible shapes.
    #[error("shape mismatch: {left:?} vs {right:?} in {op}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// Normalization over a (near-)constant vector.
    #[error("degenerate std: population std below 1e-12")]
    DegenerateStd,

    /// Backward pass requested without a recorded forward pass.
    #[error("state error: {0}")]
    State(String),

    /// Token id or word missing from the toy vocabulary.
    #[error("vocab error: unknown token {0}")]
    Vocab(String),

    /// Training loss became non-finite.
    #[error("training diverged at step {step}; last finite loss {last_loss}")]
    TrainingDiverged { step: usize, last_loss: f64 },
}

pub type Result<T> = std::result::Result<T, EvactError>;

impl EvactError {
    pub fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        EvactError::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
