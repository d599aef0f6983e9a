//! Adaptive binary slicing of an event stream.
//!
//! A node splits its slice into equal-count halves, measures the difference
//! rate between the halves' count images, and recurses while the rate stays
//! at or above the threshold, both children are large enough, and the depth
//! cap is not hit. Leaves, in temporal order, are the output slices.

use serde::Serialize;

use crate::error::{EvactError, Result};
use crate::event::EventStream;
use crate::rep::count::{count_image, difference_rate};
use crate::rep::frames::Boundary;

/// Slicing hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AfeConfig {
    /// Difference-rate threshold, in (0, 2].
    pub delta: f64,
    /// Minimum event count of a slice that may still be produced by a split.
    pub n_min: usize,
    /// Recursion cap; guarantees termination on adversarial inputs.
    pub max_depth: usize,
}

impl AfeConfig {
    pub const DEFAULT_MAX_DEPTH: usize = 12;

    pub fn new(delta: f64, n_min: usize, max_depth: usize) -> Result<Self> {
        if !(delta > 0.0 && delta <= 2.0) {
            return Err(EvactError::Validation(format!(
                "delta must be in (0, 2], got {delta}"
            )));
        }
        if n_min < 1 {
            return Err(EvactError::Validation("n_min must be >= 1".into()));
        }
        if max_depth < 1 {
            return Err(EvactError::Validation("max_depth must be >= 1".into()));
        }
        Ok(Self {
            delta,
            n_min,
            max_depth,
        })
    }
}

/// Named hyperparameter presets for the datasets the thresholds were tuned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfePreset {
    Paf,
    Hardvs,
    Seact,
}

impl AfePreset {
    pub fn config(self) -> AfeConfig {
        let (delta, n_min) = match self {
            AfePreset::Paf => (0.50, 100_000),
            AfePreset::Hardvs => (0.40, 150_000),
            AfePreset::Seact => (0.40, 100_000),
        };
        AfeConfig {
            delta,
            n_min,
            max_depth: AfeConfig::DEFAULT_MAX_DEPTH,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "paf" => Ok(AfePreset::Paf),
            "hardvs" => Ok(AfePreset::Hardvs),
            "seact" => Ok(AfePreset::Seact),
            other => Err(EvactError::Validation(format!("unknown preset `{other}`"))),
        }
    }
}

/// Why a node stopped splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    RateBelowDelta,
    BelowNMin,
    DepthCap,
}

/// One node of the recursion tree over half-open index ranges.
#[derive(Debug, Clone)]
pub struct AfeNode {
    pub start: usize,
    pub end: usize,
    pub depth: usize,
    /// Difference rate of this node's halves; absent on leaves terminated
    /// by count or depth, where the halves were never measured.
    pub rate: Option<f64>,
    /// Present iff the node is a leaf.
    pub termination: Option<TerminationReason>,
    pub children: Option<(usize, usize)>,
}

impl AfeNode {
    pub fn count(&self) -> usize {
        self.end - self.start
    }

    pub fn is_leaf(&self) -> bool {
        self.termination.is_some()
    }
}

/// The full recursion tree; leaf slices partition the input stream.
#[derive(Debug, Clone)]
pub struct AfeTree {
    nodes: Vec<AfeNode>,
    leaves: Vec<usize>,
    config: AfeConfig,
}

#[derive(Serialize)]
struct LeafRecord {
    start: usize,
    end: usize,
    t_start: u64,
    t_end: u64,
    rate: Option<f64>,
    depth: usize,
    reason: TerminationReason,
}

impl AfeTree {
    pub fn nodes(&self) -> &[AfeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &AfeNode {
        &self.nodes[0]
    }

    pub fn config(&self) -> AfeConfig {
        self.config
    }

    /// Leaf nodes in temporal order.
    pub fn leaves(&self) -> impl Iterator<Item = &AfeNode> {
        self.leaves.iter().map(|&i| &self.nodes[i])
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Leaf index/time ranges, for rendering.
    pub fn boundaries(&self, stream: &EventStream) -> Vec<Boundary> {
        self.leaves()
            .map(|n| Boundary::from_range(stream, n.start, n.end))
            .collect()
    }

    /// JSON-lines manifest of the leaves: one object per leaf with index
    /// range, time range, rate, depth, and termination reason.
    pub fn leaf_manifest(&self, stream: &EventStream) -> String {
        let mut out = String::new();
        for n in self.leaves() {
            let ev = &stream.events()[n.start..n.end];
            let rec = LeafRecord {
                start: n.start,
                end: n.end,
                t_start: ev.first().map_or(0, |e| e.t),
                t_end: ev.last().map_or(0, |e| e.t),
                rate: n.rate,
                depth: n.depth,
                reason: n.termination.expect("leaf"),
            };
            out.push_str(&serde_json::to_string(&rec).expect("serialize leaf"));
            out.push('\n');
        }
        out
    }

    /// Per-reason leaf tallies: (rate-below-delta, below-n-min, depth-cap).
    pub fn reason_tallies(&self) -> (usize, usize, usize) {
        let mut t = (0, 0, 0);
        for n in self.leaves() {
            match n.termination.expect("leaf") {
                TerminationReason::RateBelowDelta => t.0 += 1,
                TerminationReason::BelowNMin => t.1 += 1,
                TerminationReason::DepthCap => t.2 += 1,
            }
        }
        t
    }
}

pub fn afe_slice(stream: &EventStream, config: &AfeConfig) -> Result<AfeTree> {
    AfeConfig::new(config.delta, config.n_min, config.max_depth)?;
    if stream.is_empty() {
        return Err(EvactError::Validation(
            "cannot slice an empty stream".into(),
        ));
    }
    let mut tree = AfeTree {
        nodes: Vec::new(),
        leaves: Vec::new(),
        config: *config,
    };
    build(stream, config, 0, stream.len(), 0, &mut tree)?;
    Ok(tree)
}

fn build(
    stream: &EventStream,
    config: &AfeConfig,
    start: usize,
    end: usize,
    depth: usize,
    tree: &mut AfeTree,
) -> Result<usize> {
    let idx = tree.nodes.len();
    tree.nodes.push(AfeNode {
        start,
        end,
        depth,
        rate: None,
        termination: None,
        children: None,
    });

    if depth >= config.max_depth {
        tree.nodes[idx].termination = Some(TerminationReason::DepthCap);
        tree.leaves.push(idx);
        return Ok(idx);
    }

    let slice = stream.slice(start, end)?;
    let (left, right) = slice.split_mid();
    if left.count() < config.n_min || right.count() < config.n_min {
        tree.nodes[idx].termination = Some(TerminationReason::BelowNMin);
        tree.leaves.push(idx);
        return Ok(idx);
    }

    let il = count_image(&left, stream.width(), stream.height());
    let ir = count_image(&right, stream.width(), stream.height());
    let rate = difference_rate(&il, &ir, slice.count() as u64)?;
    tree.nodes[idx].rate = Some(rate);

    if rate < config.delta {
        tree.nodes[idx].termination = Some(TerminationReason::RateBelowDelta);
        tree.leaves.push(idx);
        return Ok(idx);
    }

    let l = build(stream, config, left.start(), left.end(), depth + 1, tree)?;
    let r = build(stream, config, right.start(), right.end(), depth + 1, tree)?;
    tree.nodes[idx].children = Some((l, r));
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity};

    fn stream_of(points: &[(u64, u16, u16)], w: u16, h: u16) -> EventStream {
        let events = points
            .iter()
            .map(|&(t, x, y)| Event {
                t,
                x,
                y,
                polarity: Polarity::On,
            })
            .collect();
        EventStream::new(events, w, h).unwrap()
    }

    #[test]
    fn count_bound_gives_single_below_n_min_leaf() {
        // 2 * n_min - 1 events: a split would put the right child under n_min.
        let n_min = 5;
        let pts: Vec<(u64, u16, u16)> = (0..(2 * n_min - 1) as u64).map(|t| (t, 0, 0)).collect();
        let s = stream_of(&pts, 2, 2);
        let cfg = AfeConfig::new(0.5, n_min, 12).unwrap();
        let tree = afe_slice(&s, &cfg).unwrap();
        assert_eq!(tree.leaf_count(), 1);
        assert_eq!(
            tree.root().termination,
            Some(TerminationReason::BelowNMin)
        );
        assert_eq!(tree.root().rate, None);
    }

    #[test]
    fn phase_change_splits_once_into_two_leaves() {
        // 1000 events on the left image half, then 1000 on the right half.
        // Root R = 2 >= delta; each child is spatially uniform so R ~ 0.
        let mut pts = Vec::new();
        for k in 0..1000u64 {
            pts.push((k, (k % 4) as u16, (k % 4) as u16));
        }
        for k in 0..1000u64 {
            pts.push((1000 + k, 4 + (k % 4) as u16, (k % 4) as u16));
        }
        pts.sort();
        let s = stream_of(&pts, 8, 4);
        let cfg = AfeConfig::new(0.5, 100, 12).unwrap();
        let tree = afe_slice(&s, &cfg).unwrap();
        assert_eq!(tree.root().rate, Some(2.0));
        assert_eq!(tree.leaf_count(), 2);
        for leaf in tree.leaves() {
            assert_eq!(leaf.termination, Some(TerminationReason::RateBelowDelta));
        }
    }

    #[test]
    fn delta_above_two_rejected_and_delta_two_splits_only_on_disjoint_halves() {
        assert!(AfeConfig::new(2.0 + 1e-9, 1, 12).is_err());
        // Halves share an active pixel, so R < 2 and delta = 2 never splits.
        let pts: Vec<(u64, u16, u16)> = (0..100).map(|t| (t, (t % 3) as u16, 0)).collect();
        let s = stream_of(&pts, 4, 4);
        let cfg = AfeConfig::new(2.0, 1, 12).unwrap();
        let tree = afe_slice(&s, &cfg).unwrap();
        assert_eq!(tree.leaf_count(), 1);
    }

    #[test]
    fn leaves_partition_the_stream() {
        let pts: Vec<(u64, u16, u16)> = (0..777).map(|t| (t, (t % 5) as u16, (t / 100) as u16)).collect();
        let s = stream_of(&pts, 8, 8);
        let cfg = AfeConfig::new(0.1, 3, 12).unwrap();
        let tree = afe_slice(&s, &cfg).unwrap();
        let mut next = 0;
        for leaf in tree.leaves() {
            assert_eq!(leaf.start, next);
            next = leaf.end;
        }
        assert_eq!(next, s.len());
    }

    #[test]
    fn raising_delta_never_increases_leaf_count() {
        let pts: Vec<(u64, u16, u16)> = (0..2000)
            .map(|t| (t, ((t * 7) % 11) as u16, ((t * 3) % 7) as u16))
            .collect();
        let s = stream_of(&pts, 16, 8);
        let mut prev = usize::MAX;
        for k in 1..=10 {
            let cfg = AfeConfig::new(0.2 * k as f64, 10, 12).unwrap();
            let n = afe_slice(&s, &cfg).unwrap().leaf_count();
            assert!(n <= prev, "delta {} leaves {} > {}", 0.2 * k as f64, n, prev);
            prev = n;
        }
    }

    #[test]
    fn empty_stream_rejected() {
        let s = EventStream::new(vec![], 2, 2).unwrap();
        let cfg = AfeConfig::new(0.5, 1, 12).unwrap();
        assert!(afe_slice(&s, &cfg).is_err());
    }

    #[test]
    fn presets_carry_published_thresholds() {
        let p = AfePreset::Paf.config();
        assert_eq!((p.delta, p.n_min), (0.50, 100_000));
        let h = AfePreset::Hardvs.config();
        assert_eq!((h.delta, h.n_min), (0.40, 150_000));
        let s = AfePreset::Seact.config();
        assert_eq!((s.delta, s.n_min), (0.40, 100_000));
    }
}
