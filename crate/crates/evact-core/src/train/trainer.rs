//! Minibatch training loop: AFE frames -> CRUE batch loss -> Adam with a
//! cosine-annealed learning rate, emitting a per-step metrics stream.

use rand::seq::SliceRandom;

use crate::crue::{CrueModel, LossBreakdown, LossConfig, ModelConfig};
use crate::error::{EvactError, Result};
use crate::nn::{seeded_rng, ParamStore, Tape};
use crate::rep::{afe_slice, render_frames, AfeConfig, FrameStack, SliceMethod};
use crate::train::dataset::{Split, ToyDataset};
use crate::train::eval::{evaluate, EvalReport};
use crate::train::optim::{cosine_lr, Adam};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Cosine-annealing floor.
    pub lr_min: f64,
    pub seed: u64,
    pub afe: AfeConfig,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 6,
            lr: 1e-3,
            weight_decay: 2e-4,
            lr_min: 1e-6,
            seed: 0,
            afe: AfeConfig {
                delta: 0.4,
                n_min: 100,
                max_depth: 4,
            },
            loss: LossConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(EvactError::Validation(
                "epochs and batch size must be positive".into(),
            ));
        }
        if self.lr < 0.0 || self.weight_decay < 0.0 || self.lr_min < 0.0 {
            return Err(EvactError::Validation(
                "learning rates and weight decay must be non-negative".into(),
            ));
        }
        AfeConfig::new(self.afe.delta, self.afe.n_min, self.afe.max_depth)?;
        self.loss.validate()?;
        self.model.validate()
    }
}

/// One metrics-stream record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub lr: f64,
    pub breakdown: LossBreakdown,
}

pub const METRICS_HEADER: &str = "step,lr,L_contrastive,L_smoothL1,L_reg,L_final";

impl StepMetrics {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step,
            self.lr,
            self.breakdown.contrastive,
            self.breakdown.smooth_l1,
            self.breakdown.reg,
            self.breakdown.total
        )
    }
}

/// The full metrics stream as CSV text (header + one line per step).
pub fn metrics_csv(metrics: &[StepMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in metrics {
        out.push_str(&m.csv_line());
        out.push('\n');
    }
    out
}

#[derive(Debug)]
pub struct TrainOutput {
    pub store: ParamStore,
    pub model: CrueModel,
    pub metrics: Vec<StepMetrics>,
    pub report: EvalReport,
    /// AFE frame stacks per dataset item, reusable for further evaluation.
    pub frames: Vec<FrameStack>,
}

/// AFE-slices and renders every dataset item.
pub fn prepare_frames(dataset: &ToyDataset, afe: &AfeConfig) -> Result<Vec<FrameStack>> {
    dataset
        .items
        .iter()
        .map(|item| {
            let tree = afe_slice(&item.stream, afe)?;
            render_frames(&item.stream, &tree.boundaries(&item.stream), SliceMethod::Afe)
        })
        .collect()
}

pub fn train(dataset: &ToyDataset, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let frames = prepare_frames(dataset, &config.afe)?;

    let mut store = ParamStore::new(config.seed);
    let mut init_rng = seeded_rng(config.seed);
    let mut vocab = dataset.vocab.clone();
    let model = CrueModel::init(&mut store, &mut init_rng, &mut vocab, config.model)?;

    let mut opt = Adam::new(config.weight_decay);
    let mut sample_rng = seeded_rng(config.seed ^ 0x5EED_CAFE);
    let train_idx = dataset.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(EvactError::Validation("no training items".into()));
    }

    let mut metrics = Vec::new();
    let mut step: u64 = 0;
    let mut last_loss = f64::NAN;
    for epoch in 0..config.epochs {
        let lr = cosine_lr(config.lr, config.lr_min, epoch, config.epochs);
        let mut order = train_idx.clone();
        let mut shuffle_rng =
            seeded_rng(config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut shuffle_rng);

        for chunk in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let batch: Vec<(&FrameStack, &[usize])> = chunk
                .iter()
                .map(|&i| (&frames[i], dataset.items[i].caption_tokens.as_slice()))
                .collect();
            let (total, breakdown) =
                model.batch_loss(&mut tape, &store, &batch, &config.loss, &mut sample_rng)?;
            step += 1;
            if !breakdown.total.is_finite() {
                return Err(EvactError::TrainingDiverged {
                    step: step as usize,
                    last_loss,
                });
            }
            last_loss = breakdown.total;
            store.zero_grads();
            tape.backward_into(total, &mut store)?;
            opt.step(&mut store, lr)?;
            metrics.push(StepMetrics {
                step,
                lr,
                breakdown,
            });
        }
    }

    let report = evaluate(&model, &store, dataset, &frames, Split::Test)?;
    Ok(TrainOutput {
        store,
        model,
        metrics,
        report,
        frames,
    })
}
