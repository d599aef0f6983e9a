//! Minimal dense-tensor engine: forward ops, layers, and a recorded tape
//! providing reverse-mode gradients for every trainable parameter.

mod layers;
mod params;
mod tape;
mod tensor;

pub use layers::{AttentionBlock, Mlp2};
pub use params::{seeded_rng, standard_normal, ParamStore};
pub use tape::{Tape, ValueId};
pub use tensor::Tensor;

use crate::error::Result;

/// Convenience forward-only wrappers over the tape ops, for callers that
/// work with plain tensors.
pub mod ops {
    use super::*;

    fn unary(x: &Tensor, f: impl FnOnce(&mut Tape, ValueId) -> Result<ValueId>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xi = tape.constant_tensor(x)?;
        let y = f(&mut tape, xi)?;
        Ok(tape.tensor(y))
    }

    fn binary(
        a: &Tensor,
        b: &Tensor,
        f: impl FnOnce(&mut Tape, ValueId, ValueId) -> Result<ValueId>,
    ) -> Result<Tensor> {
        let mut tape = Tape::new();
        let ai = tape.constant_tensor(a)?;
        let bi = tape.constant_tensor(b)?;
        let y = f(&mut tape, ai, bi)?;
        Ok(tape.tensor(y))
    }

    pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        binary(a, b, |t, x, y| t.matmul(x, y))
    }

    pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        binary(a, b, |t, x, y| t.add(x, y))
    }

    pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        binary(a, b, |t, x, y| t.mul(x, y))
    }

    pub fn relu(x: &Tensor) -> Result<Tensor> {
        unary(x, |t, v| Ok(t.relu(v)))
    }

    /// Softmax along the last axis.
    pub fn softmax(x: &Tensor) -> Result<Tensor> {
        unary(x, |t, v| Ok(t.softmax_rows(v)))
    }

    /// `(x - mean) / std` along the feature (last) axis, population std.
    pub fn mean_std_normalize(x: &Tensor) -> Result<Tensor> {
        unary(x, |t, v| t.mean_std_normalize_rows(v))
    }
}
