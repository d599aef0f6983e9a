//! The assembled CRUE model: toy encoders, projection heads, CR fusion, and
//! the two uncertainty branches, with a tape-level batch loss for training
//! and plain-tensor embeddings for evaluation.

use rand_chacha::ChaCha8Rng;

use crate::crue::encoders::{ToyEventEncoder, ToyTextEncoder, Vocab};
use crate::crue::fusion::{cr_fusion, mean_pool_fusion, Fusion};
use crate::crue::losses::{contrastive_loss_tape, LossBreakdown, LossConfig};
use crate::crue::uncertainty::{reparam_sample_tape, uncertainty_estimate};
use crate::error::{EvactError, Result};
use crate::nn::{AttentionBlock, Mlp2, ParamStore, Tape, Tensor, ValueId};
use crate::rep::FrameStack;

/// Architecture and ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub frame_h: u16,
    pub frame_w: u16,
    /// Frame average-pooling factor in the event featurizer.
    pub downsample: usize,
    pub enc_hidden: usize,
    /// Shared encoder embedding width D.
    pub embed_dim: usize,
    pub proj_hidden: usize,
    /// Fused embedding width P; must be divisible by 4 (halved for the
    /// Gaussian, halved again into width-2 attention tokens).
    pub fuse_dim: usize,
    /// Learnable prompt vector count n_l.
    pub n_prompts: usize,
    /// false replaces CR fusion with mean pooling (Table 4 ablation).
    pub use_cr: bool,
    /// false skips uncertainty estimation, sampling, smooth-L1 and reg.
    pub use_ue: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frame_h: 16,
            frame_w: 16,
            downsample: 4,
            enc_hidden: 32,
            embed_dim: 16,
            proj_hidden: 32,
            fuse_dim: 16,
            n_prompts: 4,
            use_cr: true,
            use_ue: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fuse_dim == 0 || self.fuse_dim % 4 != 0 {
            return Err(EvactError::shape(
                "model fuse_dim",
                &[self.fuse_dim],
                &[4],
            ));
        }
        if self.downsample == 0 || self.embed_dim == 0 || self.n_prompts == 0 {
            return Err(EvactError::Validation(
                "model dimensions must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Tape handles of one item's forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ItemNodes {
    pub fusion: Fusion,
    /// (mu, sigma, normalized mu-path target) of the event branch.
    pub event_gauss: Option<(ValueId, ValueId, ValueId)>,
    /// Same for the text branch.
    pub text_gauss: Option<(ValueId, ValueId, ValueId)>,
}

#[derive(Debug, Clone)]
pub struct CrueModel {
    pub cfg: ModelConfig,
    pub event_enc: ToyEventEncoder,
    pub text_enc: ToyTextEncoder,
    pub proj_e: Mlp2,
    pub proj_t: Mlp2,
    pub att_e_mu: AttentionBlock,
    pub att_e_sigma: AttentionBlock,
    pub att_t_mu: AttentionBlock,
    pub att_t_sigma: AttentionBlock,
}

impl CrueModel {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        vocab: &mut Vocab,
        cfg: ModelConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let event_enc = ToyEventEncoder::init(
            store,
            rng,
            cfg.frame_h,
            cfg.frame_w,
            cfg.downsample,
            cfg.enc_hidden,
            cfg.embed_dim,
        );
        let text_enc = ToyTextEncoder::init(store, rng, vocab, cfg.embed_dim, cfg.n_prompts);
        let proj_e = Mlp2::init(store, rng, "proj_e", cfg.embed_dim, cfg.proj_hidden, cfg.fuse_dim);
        let proj_t = Mlp2::init(store, rng, "proj_t", cfg.embed_dim, cfg.proj_hidden, cfg.fuse_dim);
        let att_e_mu = AttentionBlock::init(store, rng, "att_e_mu", 2);
        let att_e_sigma = AttentionBlock::init(store, rng, "att_e_sigma", 2);
        let att_t_mu = AttentionBlock::init(store, rng, "att_t_mu", 2);
        let att_t_sigma = AttentionBlock::init(store, rng, "att_t_sigma", 2);
        Ok(Self {
            cfg,
            event_enc,
            text_enc,
            proj_e,
            proj_t,
            att_e_mu,
            att_e_sigma,
            att_t_mu,
            att_t_sigma,
        })
    }

    /// Rebuilds handles against a store loaded from a checkpoint.
    pub fn attach(store: &ParamStore, vocab: &Vocab, cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            event_enc: ToyEventEncoder::attach(store, cfg.frame_h, cfg.frame_w, cfg.downsample)?,
            text_enc: ToyTextEncoder::attach(store, vocab)?,
            proj_e: Mlp2::attach(store, "proj_e")?,
            proj_t: Mlp2::attach(store, "proj_t")?,
            att_e_mu: AttentionBlock::attach(store, "att_e_mu")?,
            att_e_sigma: AttentionBlock::attach(store, "att_e_sigma")?,
            att_t_mu: AttentionBlock::attach(store, "att_t_mu")?,
            att_t_sigma: AttentionBlock::attach(store, "att_t_sigma")?,
        })
    }

    /// One item forward: encode, fuse, and (when enabled) estimate both
    /// Gaussians plus the normalized smooth-L1 targets.
    pub fn forward_item(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        frames: &FrameStack,
        class_tokens: &[usize],
    ) -> Result<ItemNodes> {
        self.forward_item_pinned(tape, store, frames, class_tokens, None)
    }

    /// [`forward_item`](Self::forward_item) with the detached smooth-L1
    /// targets optionally pinned to externally captured values. Finite-
    /// difference gradient checks need this: the targets are a stop-gradient,
    /// so they must stay at their base-point values while parameters are
    /// perturbed, or the difference quotient measures the target branch too.
    pub fn forward_item_pinned(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        frames: &FrameStack,
        class_tokens: &[usize],
        targets: Option<(&[f64], &[f64])>,
    ) -> Result<ItemNodes> {
        let f_e = self.event_enc.encode(tape, store, frames)?;
        let f_t = self.text_enc.encode(tape, store, class_tokens)?;
        let fusion = if self.cfg.use_cr {
            cr_fusion(tape, store, &self.proj_e, &self.proj_t, f_e, f_t)?
        } else {
            mean_pool_fusion(tape, store, &self.proj_e, &self.proj_t, f_e, f_t)?
        };
        if !self.cfg.use_ue {
            return Ok(ItemNodes {
                fusion,
                event_gauss: None,
                text_gauss: None,
            });
        }
        // The normalized smooth-L1 targets are detached (re-entered as
        // constants): letting gradients flow into a target built from the
        // model's own representation admits a trivial optimum where every
        // item maps to one point and the contrastive gradient vanishes.
        let normalize = |tape: &mut Tape, v: ValueId, pinned: Option<&[f64]>| -> Result<ValueId> {
            let (r, c) = tape.shape(v);
            match pinned {
                Some(data) => {
                    if data.len() != r * c {
                        return Err(EvactError::shape("pinned target", &[data.len()], &[r * c]));
                    }
                    tape.constant(r, c, data.to_vec())
                }
                None => {
                    let z = tape.mean_std_normalize_rows(v)?;
                    let data = tape.value(z).to_vec();
                    tape.constant(r, c, data)
                }
            }
        };
        let ue_e = uncertainty_estimate(
            tape,
            store,
            &self.att_e_mu,
            &self.att_e_sigma,
            fusion.f_fuse,
        )?;
        let tgt_e = normalize(tape, ue_e.mu_input, targets.map(|(e, _)| e))?;
        let ue_t = uncertainty_estimate(
            tape,
            store,
            &self.att_t_mu,
            &self.att_t_sigma,
            fusion.proj_text,
        )?;
        let tgt_t = normalize(tape, ue_t.mu_input, targets.map(|(_, t)| t))?;
        Ok(ItemNodes {
            fusion,
            event_gauss: Some((ue_e.mu, ue_e.sigma, tgt_e)),
            text_gauss: Some((ue_t.mu, ue_t.sigma, tgt_t)),
        })
    }

    /// Builds the batch loss on the tape and returns the loss node plus the
    /// per-term breakdown. Gradient targets must not flow into the smooth-L1
    /// target branch twice, so targets are recorded directly on the tape.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &[(&FrameStack, &[usize])],
        cfg: &LossConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<(ValueId, LossBreakdown)> {
        self.batch_loss_pinned(tape, store, batch, cfg, rng, None)
    }

    /// [`batch_loss`](Self::batch_loss) with per-item smooth-L1 targets
    /// pinned to captured (event, text) values; see
    /// [`forward_item_pinned`](Self::forward_item_pinned).
    pub fn batch_loss_pinned(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &[(&FrameStack, &[usize])],
        cfg: &LossConfig,
        rng: &mut ChaCha8Rng,
        targets: Option<&[(Vec<f64>, Vec<f64>)]>,
    ) -> Result<(ValueId, LossBreakdown)> {
        cfg.validate()?;
        if batch.is_empty() {
            return Err(EvactError::Validation("empty batch".into()));
        }
        if targets.is_some_and(|t| t.len() != batch.len()) {
            return Err(EvactError::Validation(
                "pinned targets must match the batch length".into(),
            ));
        }
        let items = batch
            .iter()
            .enumerate()
            .map(|(i, (frames, tokens))| {
                let pinned = targets.map(|t| (t[i].0.as_slice(), t[i].1.as_slice()));
                self.forward_item_pinned(tape, store, frames, tokens, pinned)
            })
            .collect::<Result<Vec<_>>>()?;

        if !self.cfg.use_ue {
            let f1: Vec<ValueId> = items.iter().map(|i| i.fusion.f_fuse).collect();
            let f2: Vec<ValueId> = items.iter().map(|i| i.fusion.proj_text).collect();
            let m1 = tape.concat_rows(&f1)?;
            let m2 = tape.concat_rows(&f2)?;
            let c = contrastive_loss_tape(tape, m1, m2, cfg.tau)?;
            let total = tape.scale(c, cfg.alpha);
            let breakdown = LossBreakdown {
                contrastive: tape.scalar_value(c),
                smooth_l1: 0.0,
                reg: 0.0,
                total: tape.scalar_value(total),
            };
            return Ok((total, breakdown));
        }

        let n = cfg.n_samples;
        let mut samples_e = Vec::with_capacity(items.len());
        let mut samples_t = Vec::with_capacity(items.len());
        for item in &items {
            let (mu_e, sigma_e, _) = item.event_gauss.expect("use_ue");
            let (mu_t, sigma_t, _) = item.text_gauss.expect("use_ue");
            samples_e.push(reparam_sample_tape(tape, mu_e, sigma_e, n, rng)?);
            samples_t.push(reparam_sample_tape(tape, mu_t, sigma_t, n, rng)?);
        }

        // Contrastive over all N x N sample pairings.
        let mut pair_losses = Vec::with_capacity(n * n);
        for ne in 0..n {
            for nt in 0..n {
                let rows_e: Vec<ValueId> = samples_e.iter().map(|s| s[ne]).collect();
                let rows_t: Vec<ValueId> = samples_t.iter().map(|s| s[nt]).collect();
                let m1 = tape.concat_rows(&rows_e)?;
                let m2 = tape.concat_rows(&rows_t)?;
                pair_losses.push(contrastive_loss_tape(tape, m1, m2, cfg.tau)?);
            }
        }
        let contrastive = tape.mean_scalars(&pair_losses)?;

        // Smooth-L1 over the 2N samples of each item.
        let mut sl_terms = Vec::with_capacity(items.len() * 2 * n);
        for (idx, item) in items.iter().enumerate() {
            let (_, _, tgt_e) = item.event_gauss.expect("use_ue");
            let (_, _, tgt_t) = item.text_gauss.expect("use_ue");
            for &s in &samples_e[idx] {
                sl_terms.push(tape.smooth_l1_mean(s, tgt_e)?);
            }
            for &s in &samples_t[idx] {
                sl_terms.push(tape.smooth_l1_mean(s, tgt_t)?);
            }
        }
        let smooth = tape.mean_scalars(&sl_terms)?;

        // Regularizer: batch mean of sum(sigma_e^2) + sum(sigma_t^2).
        let mut reg_terms = Vec::with_capacity(items.len());
        for item in &items {
            let (_, sigma_e, _) = item.event_gauss.expect("use_ue");
            let (_, sigma_t, _) = item.text_gauss.expect("use_ue");
            let se2 = tape.mul(sigma_e, sigma_e)?;
            let st2 = tape.mul(sigma_t, sigma_t)?;
            let se = tape.sum_all(se2);
            let st = tape.sum_all(st2);
            reg_terms.push(tape.add(se, st)?);
        }
        let reg = tape.mean_scalars(&reg_terms)?;

        let ca = tape.scale(contrastive, cfg.alpha);
        let sb = tape.scale(smooth, cfg.beta);
        let rt = tape.scale(reg, cfg.theta);
        let partial = tape.add(ca, sb)?;
        let total = tape.add(partial, rt)?;
        let breakdown = LossBreakdown {
            contrastive: tape.scalar_value(contrastive),
            smooth_l1: tape.scalar_value(smooth),
            reg: tape.scalar_value(reg),
            total: tape.scalar_value(total),
        };
        Ok((total, breakdown))
    }

    /// Eval-time event embedding for an item, conditioned on a class's
    /// tokens: mu of the event Gaussian (the mean of its samples), or the
    /// fused embedding when uncertainty is ablated.
    pub fn event_embedding(
        &self,
        store: &ParamStore,
        frames: &FrameStack,
        class_tokens: &[usize],
    ) -> Result<Tensor> {
        let mut tape = Tape::new();
        let item = self.forward_item(&mut tape, store, frames, class_tokens)?;
        let id = match item.event_gauss {
            Some((mu, _, _)) => mu,
            None => item.fusion.f_fuse,
        };
        Ok(tape.tensor(id))
    }

    /// Eval-time text embedding for a class's tokens.
    pub fn text_embedding(&self, store: &ParamStore, class_tokens: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let f_t = self.text_enc.encode(&mut tape, store, class_tokens)?;
        let pt = self.proj_t.forward(&mut tape, store, f_t)?;
        if !self.cfg.use_ue {
            return Ok(tape.tensor(pt));
        }
        let ue = uncertainty_estimate(&mut tape, store, &self.att_t_mu, &self.att_t_sigma, pt)?;
        Ok(tape.tensor(ue.mu))
    }

    /// Both sigma vectors of one item, for convergence inspection.
    pub fn sigmas(
        &self,
        store: &ParamStore,
        frames: &FrameStack,
        class_tokens: &[usize],
    ) -> Result<(Tensor, Tensor)> {
        if !self.cfg.use_ue {
            return Err(EvactError::State(
                "sigma requested from a UE-ablated model".into(),
            ));
        }
        let mut tape = Tape::new();
        let item = self.forward_item(&mut tape, store, frames, class_tokens)?;
        let (_, sig_e, _) = item.event_gauss.expect("use_ue");
        let (_, sig_t, _) = item.text_gauss.expect("use_ue");
        Ok((tape.tensor(sig_e), tape.tensor(sig_t)))
    }
}

/// Cosine similarity between two equal-length vectors.
pub fn cosine(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EvactError::shape("cosine", a.shape(), b.shape()));
    }
    let dot: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
    let na: f64 = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return Err(EvactError::Validation("cosine of a zero vector".into()));
    }
    Ok(dot / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, EventStream, Polarity};
    use crate::nn::seeded_rng;
    use crate::rep::{render_frames, Boundary, SliceMethod};

    fn toy_frames() -> FrameStack {
        let mut events = Vec::new();
        for i in 0..40u64 {
            events.push(Event {
                t: i * 10,
                x: (i % 16) as u16,
                y: ((i * 3) % 16) as u16,
                polarity: if i % 2 == 0 { Polarity::On } else { Polarity::Off },
            });
        }
        let stream = EventStream::new(events, 16, 16).unwrap();
        let b = [
            Boundary::from_range(&stream, 0, 20),
            Boundary::from_range(&stream, 20, 40),
        ];
        render_frames(&stream, &b, SliceMethod::Afe).unwrap()
    }

    fn build(use_cr: bool, use_ue: bool) -> (ParamStore, CrueModel, Vec<usize>) {
        let mut store = ParamStore::new(0);
        let mut rng = seeded_rng(1);
        let mut vocab = Vocab::new();
        let tokens = vec![vocab.add("bar"), vocab.add("right")];
        let cfg = ModelConfig {
            use_cr,
            use_ue,
            ..ModelConfig::default()
        };
        let model = CrueModel::init(&mut store, &mut rng, &mut vocab, cfg).unwrap();
        (store, model, tokens)
    }

    #[test]
    fn indivisible_fuse_dim_rejected() {
        let mut store = ParamStore::new(0);
        let mut rng = seeded_rng(1);
        let mut vocab = Vocab::new();
        let cfg = ModelConfig {
            fuse_dim: 10,
            ..ModelConfig::default()
        };
        assert!(matches!(
            CrueModel::init(&mut store, &mut rng, &mut vocab, cfg),
            Err(EvactError::Shape { .. })
        ));
    }

    #[test]
    fn batch_loss_terms_are_finite_and_additive() {
        let (store, model, tokens) = build(true, true);
        let frames = toy_frames();
        let mut tape = Tape::new();
        let mut rng = seeded_rng(3);
        let batch = vec![
            (&frames, tokens.as_slice()),
            (&frames, tokens.as_slice()),
        ];
        let cfg = LossConfig::default();
        let (total, b) = model
            .batch_loss(&mut tape, &store, &batch, &cfg, &mut rng)
            .unwrap();
        assert!((tape.scalar_value(total) - (b.contrastive + b.smooth_l1 + b.reg)).abs() < 1e-12);
        assert!(b.reg > 0.0);
    }

    #[test]
    fn ue_ablated_loss_is_contrastive_only() {
        let (store, model, tokens) = build(true, false);
        let frames = toy_frames();
        let mut tape = Tape::new();
        let mut rng = seeded_rng(3);
        let batch = vec![
            (&frames, tokens.as_slice()),
            (&frames, tokens.as_slice()),
        ];
        let (_, b) = model
            .batch_loss(&mut tape, &store, &batch, &LossConfig::default(), &mut rng)
            .unwrap();
        assert_eq!(b.smooth_l1, 0.0);
        assert_eq!(b.reg, 0.0);
        assert_eq!(b.total, b.contrastive);
    }

    #[test]
    fn gradient_reaches_sigma_branch_when_theta_positive() {
        let (mut store, model, tokens) = build(true, true);
        let frames = toy_frames();
        let mut tape = Tape::new();
        let mut rng = seeded_rng(3);
        let batch = vec![(&frames, tokens.as_slice()), (&frames, tokens.as_slice())];
        let (total, _) = model
            .batch_loss(&mut tape, &store, &batch, &LossConfig::default(), &mut rng)
            .unwrap();
        tape.backward_into(total, &mut store).unwrap();
        let g = store.grad("att_e_sigma.wo").unwrap();
        assert!(g.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn eval_embeddings_have_expected_dims() {
        let (store, model, tokens) = build(true, true);
        let frames = toy_frames();
        let e = model.event_embedding(&store, &frames, &tokens).unwrap();
        let t = model.text_embedding(&store, &tokens).unwrap();
        assert_eq!(e.len(), model.cfg.fuse_dim / 2);
        assert_eq!(t.len(), model.cfg.fuse_dim / 2);
        let (se, st) = model.sigmas(&store, &frames, &tokens).unwrap();
        assert!(se.data().iter().all(|&s| s > 0.0));
        assert!(st.data().iter().all(|&s| s > 0.0));
    }

    #[test]
    fn determinism_same_seed_same_loss() {
        let run = || {
            let (store, model, tokens) = build(true, true);
            let frames = toy_frames();
            let mut tape = Tape::new();
            let mut rng = seeded_rng(3);
            let batch = vec![(&frames, tokens.as_slice()), (&frames, tokens.as_slice())];
            let (_, b) = model
                .batch_loss(&mut tape, &store, &batch, &LossConfig::default(), &mut rng)
                .unwrap();
            b.total
        };
        assert_eq!(run(), run());
    }
}
