//! Toy trainable encoders standing in for the pre-trained event/text
//! backbones, matching their input/output shape contract at desk scale.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;

use crate::error::{EvactError, Result};
use crate::nn::{Mlp2, ParamStore, Tape, Tensor, ValueId};
use crate::rep::{Frame, FrameStack};

/// Whitespace tokenizer over a fixed small lexicon.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self::new();
        for s in sentences {
            for w in s.split_whitespace() {
                v.add(w);
            }
        }
        v
    }

    pub fn add(&mut self, word: &str) -> usize {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len();
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        id
    }

    pub fn id(&self, word: &str) -> Result<usize> {
        self.index
            .get(word)
            .copied()
            .ok_or_else(|| EvactError::Vocab(word.to_string()))
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// The fixed hand-crafted prompt prefix prepended to class tokens.
pub const HAND_PROMPT: &str = "a series of photos recording action for";

/// Per-frame featurizer + two-layer MLP. A frame is average-pooled by the
/// downsample factor, scaled to [0, 1] by its maximum, and extended with the
/// frame's normalized temporal centroid so frame order is observable.
#[derive(Debug, Clone)]
pub struct ToyEventEncoder {
    pub mlp: Mlp2,
    pub downsample: usize,
    pub frame_h: u16,
    pub frame_w: u16,
}

impl ToyEventEncoder {
    pub fn feature_dim(frame_h: u16, frame_w: u16, downsample: usize) -> usize {
        let ph = (frame_h as usize).div_ceil(downsample);
        let pw = (frame_w as usize).div_ceil(downsample);
        ph * pw * 2 + 1
    }

    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        frame_h: u16,
        frame_w: u16,
        downsample: usize,
        hidden_dim: usize,
        out_dim: usize,
    ) -> Self {
        let in_dim = Self::feature_dim(frame_h, frame_w, downsample);
        let mlp = Mlp2::init(store, rng, "enc_e", in_dim, hidden_dim, out_dim);
        Self {
            mlp,
            downsample,
            frame_h,
            frame_w,
        }
    }

    pub fn attach(store: &ParamStore, frame_h: u16, frame_w: u16, downsample: usize) -> Result<Self> {
        Ok(Self {
            mlp: Mlp2::attach(store, "enc_e")?,
            downsample,
            frame_h,
            frame_w,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.mlp.out_dim
    }

    /// Pooled pixels plus the normalized time of the frame's slice center.
    fn frame_features(&self, frame: &Frame, t_norm: f64) -> Vec<f64> {
        let ds = self.downsample;
        let (h, w) = (frame.height as usize, frame.width as usize);
        let (ph, pw) = (h.div_ceil(ds), w.div_ceil(ds));
        let mut feats = Vec::with_capacity(ph * pw * 2 + 1);
        let max = frame.data.iter().cloned().fold(0.0f32, f32::max) as f64;
        for c in 0..2u8 {
            for by in 0..ph {
                for bx in 0..pw {
                    let mut sum = 0.0;
                    let mut cells = 0.0;
                    for y in by * ds..((by + 1) * ds).min(h) {
                        for x in bx * ds..((bx + 1) * ds).min(w) {
                            sum += frame.get(c, y as u16, x as u16) as f64;
                            cells += 1.0;
                        }
                    }
                    let mean = sum / cells;
                    feats.push(if max > 0.0 { mean / max } else { 0.0 });
                }
            }
        }
        feats.push(t_norm);
        feats
    }

    /// T frames -> T x D embedding rows, in frame order.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        frames: &FrameStack,
    ) -> Result<ValueId> {
        if frames.is_empty() {
            return Err(EvactError::Validation("empty frame stack".into()));
        }
        let t0 = frames.boundaries.first().map_or(0, |b| b.t_start) as f64;
        let t1 = frames.boundaries.last().map_or(0, |b| b.t_end) as f64;
        let span = (t1 - t0).max(1.0);
        let in_dim = Self::feature_dim(self.frame_h, self.frame_w, self.downsample);
        let mut data = Vec::with_capacity(frames.len() * in_dim);
        for (frame, boundary) in frames.frames.iter().zip(&frames.boundaries) {
            let t_norm = (boundary.t_center() - t0) / span;
            data.extend(self.frame_features(frame, t_norm));
        }
        let x = tape.constant(frames.len(), in_dim, data)?;
        self.mlp.forward(tape, store, x)
    }

    /// Forward on plain tensors, discarding the tape.
    pub fn encode_tensor(&self, store: &ParamStore, frames: &FrameStack) -> Result<Tensor> {
        let mut tape = Tape::new();
        let y = self.encode(&mut tape, store, frames)?;
        Ok(tape.tensor(y))
    }
}

/// Trainable token table plus learnable prompt vectors; embeddings are the
/// average of the hand-crafted-prompt path and the learnable-prompt path,
/// each mean-pooled over its tokens.
#[derive(Debug, Clone)]
pub struct ToyTextEncoder {
    pub dim: usize,
    pub n_learnable: usize,
    hand_prefix: Vec<usize>,
}

impl ToyTextEncoder {
    /// Sizes the token table to the vocabulary after adding the hand-prompt
    /// words, so every caption/class word must be in `vocab` already.
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        vocab: &mut Vocab,
        dim: usize,
        n_learnable: usize,
    ) -> Self {
        let hand_prefix: Vec<usize> = HAND_PROMPT.split_whitespace().map(|w| vocab.add(w)).collect();
        store.insert_init("enc_t.vocab", vocab.len(), dim, rng);
        store.insert_init("enc_t.prompt", n_learnable, dim, rng);
        Self {
            dim,
            n_learnable,
            hand_prefix,
        }
    }

    pub fn attach(store: &ParamStore, vocab: &Vocab) -> Result<Self> {
        let table = store.get("enc_t.vocab")?;
        let prompt = store.get("enc_t.prompt")?;
        let hand_prefix = HAND_PROMPT
            .split_whitespace()
            .map(|w| vocab.id(w))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim: table.shape()[1],
            n_learnable: prompt.shape()[0],
            hand_prefix,
        })
    }

    fn mean_rows(tape: &mut Tape, x: ValueId) -> Result<ValueId> {
        let (rows, _) = tape.shape(x);
        let ones = tape.constant(1, rows, vec![1.0 / rows as f64; rows])?;
        tape.matmul(ones, x)
    }

    /// Class/caption tokens -> 1 x D embedding.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        class_tokens: &[usize],
    ) -> Result<ValueId> {
        if class_tokens.is_empty() {
            return Err(EvactError::Validation("empty class token sequence".into()));
        }
        let table = tape.param(store, "enc_t.vocab")?;
        let prompt = tape.param(store, "enc_t.prompt")?;

        let mut hand_ids = self.hand_prefix.clone();
        hand_ids.extend_from_slice(class_tokens);
        let hand_rows = tape.gather_rows(table, &hand_ids)?;
        let f_hand = Self::mean_rows(tape, hand_rows)?;

        let class_rows = tape.gather_rows(table, class_tokens)?;
        let learn_rows = tape.concat_rows(&[prompt, class_rows])?;
        let f_learn = Self::mean_rows(tape, learn_rows)?;

        let sum = tape.add(f_hand, f_learn)?;
        Ok(tape.scale(sum, 0.5))
    }

    pub fn encode_tensor(&self, store: &ParamStore, class_tokens: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let y = self.encode(&mut tape, store, class_tokens)?;
        Ok(tape.tensor(y))
    }
}
