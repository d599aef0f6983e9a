//! Conceptual-reasoning fusion: text-conditioned softmax pooling over the
//! T frame embeddings.

use crate::error::Result;
use crate::nn::{Mlp2, ParamStore, Tape, Tensor, ValueId};

/// Outputs of one fusion pass. The weights are kept for inspection and the
/// projected text embedding is reused by downstream losses.
#[derive(Debug, Clone, Copy)]
pub struct Fusion {
    /// 1 x P fused event embedding.
    pub f_fuse: ValueId,
    /// 1 x T reasoning weights (non-negative, sum to 1).
    pub weights: ValueId,
    /// 1 x P projected text embedding.
    pub proj_text: ValueId,
}

/// `w = softmax_T(proj_e(f_e) . proj_t(f_t))`, `f_fuse = sum_t w_t proj_e(f_e)_t`.
pub fn cr_fusion(
    tape: &mut Tape,
    store: &ParamStore,
    proj_e: &Mlp2,
    proj_t: &Mlp2,
    f_e: ValueId,
    f_t: ValueId,
) -> Result<Fusion> {
    let pe = proj_e.forward(tape, store, f_e)?; // T x P
    let pt = proj_t.forward(tape, store, f_t)?; // 1 x P
    let pt_t = tape.transpose(pt); // P x 1
    let logits = tape.matmul(pe, pt_t)?; // T x 1
    let logits = tape.transpose(logits); // 1 x T
    let weights = tape.softmax_rows(logits);
    let f_fuse = tape.matmul(weights, pe)?; // 1 x P
    Ok(Fusion {
        f_fuse,
        weights,
        proj_text: pt,
    })
}

/// Ablation fusion: uniform weights over T (mean pooling), text path intact.
pub fn mean_pool_fusion(
    tape: &mut Tape,
    store: &ParamStore,
    proj_e: &Mlp2,
    proj_t: &Mlp2,
    f_e: ValueId,
    f_t: ValueId,
) -> Result<Fusion> {
    let pe = proj_e.forward(tape, store, f_e)?;
    let pt = proj_t.forward(tape, store, f_t)?;
    let (t, _) = tape.shape(pe);
    let weights = tape.constant(1, t, vec![1.0 / t as f64; t])?;
    let f_fuse = tape.matmul(weights, pe)?;
    Ok(Fusion {
        f_fuse,
        weights,
        proj_text: pt,
    })
}

/// Forward-only fusion on plain tensors: returns `(f_fuse, weights)`.
pub fn cr_fusion_tensor(
    store: &ParamStore,
    proj_e: &Mlp2,
    proj_t: &Mlp2,
    f_e: &Tensor,
    f_t: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let fe = tape.constant_tensor(f_e)?;
    let ft = tape.constant_tensor(f_t)?;
    let fusion = cr_fusion(&mut tape, store, proj_e, proj_t, fe, ft)?;
    Ok((tape.tensor(fusion.f_fuse), tape.tensor(fusion.weights)))
}
