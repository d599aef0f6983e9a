//! Deterministic labeled toy datasets: each class maps to a sequence of
//! synthetic motion segments plus a caption, with converse-order class pairs
//! (A then B vs. B then A) to exercise temporal reasoning.

use rand::Rng;

use crate::crue::Vocab;
use crate::error::{EvactError, Result};
use crate::event::{
    generate_scene, Event, EventStream, MotionSegment, ObjectKind, Polarity, SyntheticScene,
};
use crate::nn::seeded_rng;

/// One class: ordered motion segments and a caption.
#[derive(Debug, Clone)]
pub struct ClassSpec {
    pub name: String,
    pub caption: String,
    pub segments: Vec<ObjectKind>,
}

/// Generation parameters shared by all classes.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub classes: Vec<ClassSpec>,
    pub items_per_class: usize,
    pub width: u16,
    pub height: u16,
    /// Total duration of one item, divided equally among its segments.
    pub item_duration_us: u64,
    /// Foreground events per microsecond (jittered +-20% per item).
    pub rate_per_us: f64,
    pub noise_rate_per_us: f64,
}

impl DatasetSpec {
    /// The 4-class task used throughout: two bar directions plus one
    /// converse-order pair of composite motions.
    pub fn toy_default() -> Self {
        let class = |name: &str, caption: &str, segments: Vec<ObjectKind>| ClassSpec {
            name: name.to_string(),
            caption: caption.to_string(),
            segments,
        };
        DatasetSpec {
            classes: vec![
                class(
                    "bar-right",
                    "a bar sweeps right",
                    vec![ObjectKind::TranslatingBar { leftward: false }],
                ),
                class(
                    "bar-left",
                    "a bar sweeps left",
                    vec![ObjectKind::TranslatingBar { leftward: true }],
                ),
                // The converse-pair captions use different connectives
                // ("before" / "until"): with order-invariant mean pooling,
                // word-multiset-identical captions would embed identically
                // and the pair would be untrainable on the text side.
                class(
                    "expand-then-oscillate",
                    "a square expands before a dot oscillates",
                    vec![ObjectKind::ExpandingSquare, ObjectKind::OscillatingDot],
                ),
                class(
                    "oscillate-then-expand",
                    "a dot oscillates until a square expands",
                    vec![ObjectKind::OscillatingDot, ObjectKind::ExpandingSquare],
                ),
            ],
            items_per_class: 50,
            width: 16,
            height: 16,
            item_duration_us: 4000,
            rate_per_us: 0.25,
            noise_rate_per_us: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct DataItem {
    pub stream: EventStream,
    pub class_id: usize,
    pub caption_tokens: Vec<usize>,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub items: Vec<DataItem>,
    pub class_count: usize,
    pub class_names: Vec<String>,
    /// Tokenized caption per class, indexable by class id.
    pub class_tokens: Vec<Vec<usize>>,
    pub vocab: Vocab,
}

impl ToyDataset {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.split == split)
            .map(|(i, _)| i)
            .collect()
    }
}

fn kind_tag(kind: ObjectKind) -> u64 {
    match kind {
        ObjectKind::TranslatingBar { leftward: false } => 1,
        ObjectKind::TranslatingBar { leftward: true } => 2,
        ObjectKind::StaticTexture => 3,
        ObjectKind::ExpandingSquare => 4,
        ObjectKind::OscillatingDot => 5,
    }
}

/// One item's stream. Segments are generated independently with seeds that
/// depend on the segment *kind*, not its position, so converse-order classes
/// produce identical event multisets (up to time shift) from the same item
/// seed — the property the converse-pair oracle test checks.
pub fn item_stream(spec: &DatasetSpec, class: &ClassSpec, item_seed: u64) -> Result<EventStream> {
    if class.segments.is_empty() {
        return Err(EvactError::Validation(format!(
            "class `{}` has no segments",
            class.name
        )));
    }
    let mut rng = seeded_rng(item_seed);
    let rate = spec.rate_per_us * rng.gen_range(0.8..1.2);
    let seg_dur = spec.item_duration_us / class.segments.len() as u64;
    if seg_dur == 0 {
        return Err(EvactError::Validation("item duration too short".into()));
    }

    let mut events: Vec<Event> = Vec::new();
    let mut offset = 0u64;
    for &kind in &class.segments {
        let scene = SyntheticScene {
            width: spec.width,
            height: spec.height,
            segments: vec![MotionSegment {
                duration_us: seg_dur,
                kind,
                rate_per_us: rate,
            }],
            noise_rate_per_us: 0.0,
            seed: item_seed ^ (kind_tag(kind) << 32),
        };
        let s = generate_scene(&scene)?;
        events.extend(s.events().iter().map(|e| Event {
            t: e.t + offset,
            ..*e
        }));
        offset += seg_dur;
    }

    let noise_n = (spec.noise_rate_per_us * spec.item_duration_us as f64).round() as u64;
    for _ in 0..noise_n {
        events.push(Event {
            t: rng.gen_range(0..spec.item_duration_us),
            x: rng.gen_range(0..spec.width),
            y: rng.gen_range(0..spec.height),
            polarity: if rng.gen_bool(0.5) {
                Polarity::On
            } else {
                Polarity::Off
            },
        });
    }
    events.sort_by_key(|e| e.t);
    EventStream::new(events, spec.width, spec.height)
}

fn item_seed(seed: u64, class_id: usize, item: usize) -> u64 {
    seed ^ ((class_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        ^ ((item as u64 + 1).wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
}

/// Generates a full dataset: deterministic from the seed, 80/20 train/test
/// per class (first 80% of each class's items are train).
///
/// `EVACT_THREADS` (> 1) fans item generation out to that many workers;
/// results are identical to the single-threaded path.
pub fn build_dataset(spec: &DatasetSpec, seed: u64) -> Result<ToyDataset> {
    if spec.classes.len() < 2 {
        return Err(EvactError::Validation(format!(
            "need at least 2 classes, got {}",
            spec.classes.len()
        )));
    }
    if spec.items_per_class == 0 {
        return Err(EvactError::Validation("items_per_class must be >= 1".into()));
    }
    let vocab = Vocab::from_sentences(spec.classes.iter().map(|c| c.caption.as_str()));
    let class_tokens = spec
        .classes
        .iter()
        .map(|c| vocab.tokenize(&c.caption))
        .collect::<Result<Vec<_>>>()?;

    // (class, item) work list in deterministic order.
    let work: Vec<(usize, usize)> = (0..spec.classes.len())
        .flat_map(|c| (0..spec.items_per_class).map(move |i| (c, i)))
        .collect();
    let threads: usize = std::env::var("EVACT_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1);

    let gen_one = |&(c, i): &(usize, usize)| -> Result<EventStream> {
        item_stream(spec, &spec.classes[c], item_seed(seed, c, i))
    };
    let streams: Vec<EventStream> = if threads <= 1 {
        work.iter().map(gen_one).collect::<Result<Vec<_>>>()?
    } else {
        let chunk = work.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = work
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(gen_one).collect::<Result<Vec<_>>>()))
                .collect();
            let mut out = Vec::with_capacity(work.len());
            for h in handles {
                out.extend(h.join().expect("dataset worker panicked")?);
            }
            Ok::<_, EvactError>(out)
        })?
    };

    let train_per_class = spec.items_per_class * 4 / 5;
    let items = work
        .iter()
        .zip(streams)
        .map(|(&(c, i), stream)| DataItem {
            stream,
            class_id: c,
            caption_tokens: class_tokens[c].clone(),
            split: if i < train_per_class {
                Split::Train
            } else {
                Split::Test
            },
        })
        .collect();

    Ok(ToyDataset {
        items,
        class_count: spec.classes.len(),
        class_names: spec.classes.iter().map(|c| c.name.clone()).collect(),
        class_tokens,
        vocab,
    })
}
