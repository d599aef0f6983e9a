//! The CRUE module: conceptual-reasoning fusion and uncertainty estimation
//! over event-frame embeddings, with the composite training loss.
//!
//! Pipeline per item: AFE frames -> [`ToyEventEncoder`] (T x D rows) and
//! [`ToyTextEncoder`] (1 x D), projected and fused by [`cr_fusion`]; the
//! fused and text embeddings each feed [`uncertainty_estimate`] to produce a
//! Gaussian whose reparameterized samples drive the contrastive, smooth-L1,
//! and regularization terms combined in [`final_loss`].

mod encoders;
mod fusion;
mod losses;
mod model;
mod uncertainty;

pub use encoders::{ToyEventEncoder, ToyTextEncoder, Vocab, HAND_PROMPT};
pub use fusion::{cr_fusion, cr_fusion_tensor, mean_pool_fusion, Fusion};
pub use losses::{
    contrastive_loss, contrastive_loss_tape, final_loss, normalize_target, reg_loss,
    smooth_l1_loss, LossBreakdown, LossConfig,
};
pub use model::{cosine, CrueModel, ItemNodes, ModelConfig};
pub use uncertainty::{
    reparam_sample, reparam_sample_tape, uncertainty_estimate, uncertainty_estimate_tensor,
    GaussianEmbedding, Modality, SampleSet, UncertaintyNodes,
};
