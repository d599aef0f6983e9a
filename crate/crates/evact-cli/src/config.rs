//! Line-oriented `key=value` run configuration shared by `train`, `eval`,
//! and `retrieve`: dataset generation parameters plus every trainer knob.
//! Unknown keys are rejected; command-line flags override file values.

use std::path::Path;
use std::str::FromStr;

use evact_core::error::{EvactError, Result};
use evact_core::train::{DatasetSpec, TrainConfig};

/// One fully resolved run: what data to generate and how to train on it.
#[derive(Debug, Clone)]
pub struct Setup {
    pub dataset: DatasetSpec,
    pub dataset_seed: u64,
    pub train: TrainConfig,
}

impl Default for Setup {
    fn default() -> Self {
        Setup {
            dataset: DatasetSpec::toy_default(),
            dataset_seed: 1234,
            train: TrainConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| EvactError::Validation(format!("config key `{key}`: bad value `{value}`")))
}

impl Setup {
    /// Reads a config file: one `key=value` per line, `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            EvactError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut setup = Setup::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                EvactError::Validation(format!(
                    "config line {}: expected key=value, got `{line}`",
                    lineno + 1
                ))
            })?;
            setup.apply(key.trim(), value.trim())?;
        }
        Ok(setup)
    }

    /// Applies one key; flags reuse this after the file so they win.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            // Dataset generation.
            "classes" => {
                let n: usize = parse(key, value)?;
                if !(2..=self.dataset.classes.len().max(2)).contains(&n) || n > 4 {
                    return Err(EvactError::Validation(format!(
                        "classes must be in 2..=4, got {n}"
                    )));
                }
                self.dataset.classes.truncate(n);
            }
            "items_per_class" => self.dataset.items_per_class = parse(key, value)?,
            "width" => self.dataset.width = parse(key, value)?,
            "height" => self.dataset.height = parse(key, value)?,
            "item_duration_us" => self.dataset.item_duration_us = parse(key, value)?,
            "rate_per_us" => self.dataset.rate_per_us = parse(key, value)?,
            "noise_rate_per_us" => self.dataset.noise_rate_per_us = parse(key, value)?,
            "dataset_seed" => self.dataset_seed = parse(key, value)?,
            // Trainer.
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "lr" => self.train.lr = parse(key, value)?,
            "weight_decay" => self.train.weight_decay = parse(key, value)?,
            "lr_min" => self.train.lr_min = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            // Slicer.
            "delta" => self.train.afe.delta = parse(key, value)?,
            "n_min" => self.train.afe.n_min = parse(key, value)?,
            "max_depth" => self.train.afe.max_depth = parse(key, value)?,
            // Loss.
            "tau" => self.train.loss.tau = parse(key, value)?,
            "alpha" => self.train.loss.alpha = parse(key, value)?,
            "beta" => self.train.loss.beta = parse(key, value)?,
            "theta" => self.train.loss.theta = parse(key, value)?,
            "n_samples" => self.train.loss.n_samples = parse(key, value)?,
            // Model.
            "use_cr" => self.train.model.use_cr = parse(key, value)?,
            "use_ue" => self.train.model.use_ue = parse(key, value)?,
            "downsample" => self.train.model.downsample = parse(key, value)?,
            "enc_hidden" => self.train.model.enc_hidden = parse(key, value)?,
            "embed_dim" => self.train.model.embed_dim = parse(key, value)?,
            "proj_hidden" => self.train.model.proj_hidden = parse(key, value)?,
            "fuse_dim" => self.train.model.fuse_dim = parse(key, value)?,
            "n_prompts" => self.train.model.n_prompts = parse(key, value)?,
            other => {
                return Err(EvactError::Validation(format!(
                    "unknown config key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Syncs derived fields and validates; call after all keys are applied.
    pub fn finish(mut self) -> Result<Self> {
        self.train.model.frame_h = self.dataset.height;
        self.train.model.frame_w = self.dataset.width;
        self.train.validate()?;
        Ok(self)
    }
}
