//! Top-k classification evaluation and cosine-similarity retrieval.

use crate::crue::{cosine, CrueModel};
use crate::error::{EvactError, Result};
use crate::nn::{ParamStore, Tensor};
use crate::rep::FrameStack;
use crate::train::dataset::{Split, ToyDataset};

/// Classification and retrieval quality of a trained model on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub top1: f64,
    pub top5: f64,
    /// (class name, top-1 accuracy) per class.
    pub per_class: Vec<(String, f64)>,
    /// Event -> text retrieval hit rate at k = 1 over the class captions.
    pub retrieval_hit1: f64,
    /// Smallest sigma entry seen across items, per modality; absent when
    /// uncertainty is ablated.
    pub min_sigma_e: Option<f64>,
    pub min_sigma_t: Option<f64>,
}

impl EvalReport {
    /// Flat `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("top1={}\n", self.top1));
        out.push_str(&format!("top5={}\n", self.top5));
        for (name, acc) in &self.per_class {
            out.push_str(&format!("class.{name}={acc}\n"));
        }
        out.push_str(&format!("retrieval_hit1={}\n", self.retrieval_hit1));
        if let Some(s) = self.min_sigma_e {
            out.push_str(&format!("min_sigma_e={s}\n"));
        }
        if let Some(s) = self.min_sigma_t {
            out.push_str(&format!("min_sigma_t={s}\n"));
        }
        out
    }
}

/// Per-class similarity scores of one item: score c is the cosine between
/// the event embedding conditioned on class c's tokens and class c's text
/// embedding.
pub fn class_scores(
    model: &CrueModel,
    store: &ParamStore,
    frames: &FrameStack,
    class_tokens: &[Vec<usize>],
    text_embeddings: &[Tensor],
) -> Result<Vec<f64>> {
    class_tokens
        .iter()
        .zip(text_embeddings)
        .map(|(tokens, txt)| {
            let ev = model.event_embedding(store, frames, tokens)?;
            cosine(&ev, txt)
        })
        .collect()
}

/// Descending-similarity ranking of `corpus` against `query`; ties broken by
/// index; `k` is clamped to the corpus size.
pub fn rank_by_cosine(query: &Tensor, corpus: &[Tensor], k: usize) -> Result<Vec<(f64, usize)>> {
    if corpus.is_empty() {
        return Err(EvactError::Validation("empty retrieval corpus".into()));
    }
    let mut scored = corpus
        .iter()
        .enumerate()
        .map(|(i, c)| Ok((cosine(query, c)?, i)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(k.min(scored.len()).max(1).min(scored.len()));
    Ok(scored)
}

/// Event -> text retrieval: rank candidate captions by the similarity of the
/// caption-conditioned event embedding to that caption's text embedding.
pub fn retrieve_event_to_text(
    model: &CrueModel,
    store: &ParamStore,
    frames: &FrameStack,
    captions: &[Vec<usize>],
    k: usize,
) -> Result<Vec<(f64, usize)>> {
    if captions.is_empty() {
        return Err(EvactError::Validation("empty retrieval corpus".into()));
    }
    let mut scored = captions
        .iter()
        .enumerate()
        .map(|(i, tokens)| {
            let ev = model.event_embedding(store, frames, tokens)?;
            let txt = model.text_embedding(store, tokens)?;
            Ok((cosine(&ev, &txt)?, i))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(k.min(scored.len()).max(1).min(scored.len()));
    Ok(scored)
}

pub fn evaluate(
    model: &CrueModel,
    store: &ParamStore,
    dataset: &ToyDataset,
    frames: &[FrameStack],
    split: Split,
) -> Result<EvalReport> {
    let idx = dataset.indices(split);
    if idx.is_empty() {
        return Err(EvactError::Validation("empty evaluation split".into()));
    }
    let k_classes = dataset.class_count;
    let text_embeddings = dataset
        .class_tokens
        .iter()
        .map(|t| model.text_embedding(store, t))
        .collect::<Result<Vec<_>>>()?;

    let top_k = 5.min(k_classes);
    let mut top1_hits = 0usize;
    let mut topk_hits = 0usize;
    let mut class_total = vec![0usize; k_classes];
    let mut class_hits = vec![0usize; k_classes];
    let mut min_sigma_e = f64::INFINITY;
    let mut min_sigma_t = f64::INFINITY;

    for &i in &idx {
        let item = &dataset.items[i];
        let scores = class_scores(model, store, &frames[i], &dataset.class_tokens, &text_embeddings)?;
        let mut order: Vec<usize> = (0..k_classes).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        class_total[item.class_id] += 1;
        if order[0] == item.class_id {
            top1_hits += 1;
            class_hits[item.class_id] += 1;
        }
        if order[..top_k].contains(&item.class_id) {
            topk_hits += 1;
        }
        if model.cfg.use_ue {
            let (se, st) = model.sigmas(store, &frames[i], &item.caption_tokens)?;
            min_sigma_e = se.data().iter().cloned().fold(min_sigma_e, f64::min);
            min_sigma_t = st.data().iter().cloned().fold(min_sigma_t, f64::min);
        }
    }

    let n = idx.len() as f64;
    let per_class = dataset
        .class_names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let acc = if class_total[c] == 0 {
                0.0
            } else {
                class_hits[c] as f64 / class_total[c] as f64
            };
            (name.clone(), acc)
        })
        .collect();

    Ok(EvalReport {
        top1: top1_hits as f64 / n,
        top5: topk_hits as f64 / n,
        per_class,
        retrieval_hit1: top1_hits as f64 / n,
        min_sigma_e: model.cfg.use_ue.then_some(min_sigma_e),
        min_sigma_t: model.cfg.use_ue.then_some(min_sigma_t),
    })
}
