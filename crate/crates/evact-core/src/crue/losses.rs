//! The three training-loss terms and their weighted combination.

use crate::crue::uncertainty::{GaussianEmbedding, SampleSet};
use crate::error::{EvactError, Result};
use crate::nn::{ops, Tape, Tensor, ValueId};

/// Loss weights and sampling count.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    /// Contrastive temperature, > 0.
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    /// Samples per Gaussian (N).
    pub n_samples: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            alpha: 1.0,
            beta: 1.0,
            theta: 1.0,
            n_samples: 5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(EvactError::Validation(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        if self.n_samples == 0 {
            return Err(EvactError::Validation("n_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-term values of one combined-loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub smooth_l1: f64,
    pub reg: f64,
    pub total: f64,
}

/// `(x - mean) / std` of the vector a smooth-L1 target is built from.
pub fn normalize_target(source: &Tensor) -> Result<Tensor> {
    ops::mean_std_normalize(source)
}

/// Mean smooth-L1 penalty between a sample and an already-normalized target.
pub fn smooth_l1_loss(sample: &Tensor, target_normalized: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let s = tape.constant_tensor(sample)?;
    let t = tape.constant_tensor(target_normalized)?;
    let l = tape.smooth_l1_mean(s, t)?;
    Ok(tape.scalar_value(l))
}

/// `sum(sigma_e^2) + sum(sigma_t^2)`.
pub fn reg_loss(g_e: &GaussianEmbedding, g_t: &GaussianEmbedding) -> f64 {
    let sq = |g: &GaussianEmbedding| g.sigma.data().iter().map(|&s| s * s).sum::<f64>();
    sq(g_e) + sq(g_t)
}

/// Symmetrized InfoNCE on a tape; rows are L2-normalized internally.
pub fn contrastive_loss_tape(
    tape: &mut Tape,
    f1: ValueId,
    f2: ValueId,
    tau: f64,
) -> Result<ValueId> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(EvactError::Validation(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let n1 = tape.l2_normalize_rows(f1)?;
    let n2 = tape.l2_normalize_rows(f2)?;
    let n2t = tape.transpose(n2);
    let sims = tape.matmul(n1, n2t)?;
    let logits = tape.scale(sims, 1.0 / tau);
    let fwd = tape.nce_diag(logits)?;
    let logits_t = tape.transpose(logits);
    let bwd = tape.nce_diag(logits_t)?;
    let sum = tape.add(fwd, bwd)?;
    Ok(tape.scale(sum, 0.5))
}

/// Symmetrized InfoNCE over two batches of embeddings (row b of `f1` is the
/// positive pair of row b of `f2`).
pub fn contrastive_loss(f1: &Tensor, f2: &Tensor, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant_tensor(f1)?;
    let b = tape.constant_tensor(f2)?;
    let l = contrastive_loss_tape(&mut tape, a, b, tau)?;
    Ok(tape.scalar_value(l))
}

/// Combined loss on plain values (the training loop uses the tape variant in
/// the model; this surface exists for fixtures and the ablation harness).
///
/// Slices are indexed by batch item. Smooth-L1 targets are the normalized
/// first halves of the fused event embedding and the projected text
/// embedding — the same vectors the mu paths read from.
pub fn final_loss(
    event_samples: &[SampleSet],
    text_samples: &[SampleSet],
    f_e_fuse: &[Tensor],
    f_t: &[Tensor],
    g_e: &[GaussianEmbedding],
    g_t: &[GaussianEmbedding],
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    let b = event_samples.len();
    if b == 0
        || [text_samples.len(), f_e_fuse.len(), f_t.len(), g_e.len(), g_t.len()]
            .iter()
            .any(|&l| l != b)
    {
        return Err(EvactError::Validation(
            "final_loss inputs must be equal-length non-empty batches".into(),
        ));
    }
    let n_e = event_samples[0].samples.len();
    let n_t = text_samples[0].samples.len();

    // Contrastive: mean over the N x N sample pairings.
    let dim = event_samples[0].samples[0].len();
    let mut contrastive = 0.0;
    for n in 0..n_e {
        for m in 0..n_t {
            let mut d1 = Vec::with_capacity(b * dim);
            let mut d2 = Vec::with_capacity(b * dim);
            for item in 0..b {
                d1.extend_from_slice(event_samples[item].samples[n].data());
                d2.extend_from_slice(text_samples[item].samples[m].data());
            }
            let m1 = Tensor::matrix(b, dim, d1)?;
            let m2 = Tensor::matrix(b, dim, d2)?;
            contrastive += contrastive_loss(&m1, &m2, cfg.tau)?;
        }
    }
    contrastive /= (n_e * n_t) as f64;

    // Smooth-L1: mean over the 2N samples of every item.
    let mut smooth = 0.0;
    let mut terms = 0usize;
    for item in 0..b {
        let half = |t: &Tensor| -> Result<Tensor> {
            let d = t.len();
            Tensor::matrix(1, d / 2, t.data()[..d / 2].to_vec())
        };
        let tgt_e = normalize_target(&half(&f_e_fuse[item])?)?;
        let tgt_t = normalize_target(&half(&f_t[item])?)?;
        for s in &event_samples[item].samples {
            smooth += smooth_l1_loss(s, &tgt_e)?;
            terms += 1;
        }
        for s in &text_samples[item].samples {
            smooth += smooth_l1_loss(s, &tgt_t)?;
            terms += 1;
        }
    }
    smooth /= terms as f64;

    let reg = (0..b).map(|i| reg_loss(&g_e[i], &g_t[i])).sum::<f64>() / b as f64;

    let total = cfg.alpha * contrastive + cfg.beta * smooth + cfg.theta * reg;
    Ok(LossBreakdown {
        contrastive,
        smooth_l1: smooth,
        reg,
        total,
    })
}
