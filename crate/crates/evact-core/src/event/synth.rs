//! Seeded synthetic event scenes: a few moving/static object kinds plus
//! uniform background noise, rendered as a sorted event stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EvactError, Result};
use crate::event::{Event, EventStream, Polarity};

/// What emits events during a segment.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ObjectKind {
    /// Vertical bar sweeping across the full width over the segment.
    TranslatingBar { leftward: bool },
    /// Fixed pseudo-random pixel mask (see [`texture_mask`]).
    StaticTexture,
    /// Centered square outline growing from the center to the border.
    ExpandingSquare,
    /// Dot oscillating horizontally around the center.
    OscillatingDot,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MotionSegment {
    pub duration_us: u64,
    pub kind: ObjectKind,
    /// Events per microsecond; the segment emits round(rate * duration) events.
    pub rate_per_us: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticScene {
    pub width: u16,
    pub height: u16,
    pub segments: Vec<MotionSegment>,
    /// Uniform background events per microsecond over the whole scene.
    pub noise_rate_per_us: f64,
    pub seed: u64,
}

/// The deterministic pixel set used by [`ObjectKind::StaticTexture`]:
/// roughly one in eight pixels, drawn from the scene seed.
pub fn texture_mask(seed: u64, width: u16, height: u16) -> Vec<(u16, u16)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e97_05e5);
    let total = width as usize * height as usize;
    let want = (total / 8).max(1);
    let mut mask = Vec::with_capacity(want);
    let mut seen = std::collections::HashSet::new();
    while mask.len() < want {
        let x = rng.gen_range(0..width);
        let y = rng.gen_range(0..height);
        if seen.insert((x, y)) {
            mask.push((x, y));
        }
    }
    mask.sort_unstable();
    mask
}

impl SyntheticScene {
    pub fn total_duration_us(&self) -> u64 {
        self.segments.iter().map(|s| s.duration_us).sum()
    }
}

pub fn generate_scene(scene: &SyntheticScene) -> Result<EventStream> {
    if scene.width == 0 || scene.height == 0 {
        return Err(EvactError::Validation(format!(
            "zero-area geometry {}x{}",
            scene.width, scene.height
        )));
    }
    for (i, seg) in scene.segments.iter().enumerate() {
        if seg.duration_us == 0 || seg.rate_per_us <= 0.0 {
            return Err(EvactError::Validation(format!(
                "segment {i}: duration and rate must be positive"
            )));
        }
    }
    if scene.noise_rate_per_us < 0.0 {
        return Err(EvactError::Validation("noise rate must be >= 0".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let mask = texture_mask(scene.seed, scene.width, scene.height);
    let mut events = Vec::new();

    let mut seg_start = 0u64;
    for seg in &scene.segments {
        let n = (seg.rate_per_us * seg.duration_us as f64).round() as u64;
        for k in 0..n {
            // Evenly spaced base times keep counts exact per segment.
            let t = seg_start + (k * seg.duration_us) / n.max(1);
            let u = (t - seg_start) as f64 / seg.duration_us as f64;
            let (x, y) = sample_position(seg.kind, u, scene.width, scene.height, &mask, &mut rng);
            let polarity = if rng.gen_bool(0.5) {
                Polarity::On
            } else {
                Polarity::Off
            };
            events.push(Event { t, x, y, polarity });
        }
        seg_start += seg.duration_us;
    }

    let total = scene.total_duration_us().max(1);
    let noise_n = (scene.noise_rate_per_us * total as f64).round() as u64;
    for _ in 0..noise_n {
        let t = rng.gen_range(0..total);
        let x = rng.gen_range(0..scene.width);
        let y = rng.gen_range(0..scene.height);
        let polarity = if rng.gen_bool(0.5) {
            Polarity::On
        } else {
            Polarity::Off
        };
        events.push(Event { t, x, y, polarity });
    }

    events.sort_by_key(|e| e.t);
    EventStream::new(events, scene.width, scene.height)
}

fn sample_position(
    kind: ObjectKind,
    u: f64,
    width: u16,
    height: u16,
    mask: &[(u16, u16)],
    rng: &mut ChaCha8Rng,
) -> (u16, u16) {
    let w = width as f64;
    let h = height as f64;
    let clamp_x = |v: f64| v.round().clamp(0.0, w - 1.0) as u16;
    let clamp_y = |v: f64| v.round().clamp(0.0, h - 1.0) as u16;
    match kind {
        ObjectKind::TranslatingBar { leftward } => {
            let frac = if leftward { 1.0 - u } else { u };
            let xc = frac * (w - 1.0);
            let x = clamp_x(xc + rng.gen_range(-0.5..0.5));
            let y = rng.gen_range(0..height);
            (x, y)
        }
        ObjectKind::StaticTexture => mask[rng.gen_range(0..mask.len())],
        ObjectKind::ExpandingSquare => {
            let cx = (w - 1.0) / 2.0;
            let cy = (h - 1.0) / 2.0;
            let half = (u * (w.min(h) / 2.0 - 1.0)).max(0.5);
            // Pick a point on the square outline.
            let side = rng.gen_range(0..4u8);
            let off = rng.gen_range(-half..half);
            let (px, py) = match side {
                0 => (cx + off, cy - half),
                1 => (cx + off, cy + half),
                2 => (cx - half, cy + off),
                _ => (cx + half, cy + off),
            };
            (clamp_x(px), clamp_y(py))
        }
        ObjectKind::OscillatingDot => {
            let cx = (w - 1.0) / 2.0;
            let cy = (h - 1.0) / 2.0;
            let amp = (w / 2.0 - 1.5).max(1.0);
            let x = cx + amp * (std::f64::consts::TAU * 3.0 * u).sin();
            (
                clamp_x(x + rng.gen_range(-0.5..0.5)),
                clamp_y(cy + rng.gen_range(-1.0..1.0)),
            )
        }
    }
}
