//! Fixed-count, fixed-duration, and voxel baselines the adaptive slicer is
//! compared against.

use crate::error::{EvactError, Result};
use crate::event::{EventStream, Polarity};
use crate::rep::frames::{Boundary, Frame, FrameStack, SliceMethod};

/// Consecutive windows of exactly `count_per_frame` events. The final partial
/// window keeps its own frame when at least half full, otherwise it is merged
/// into the previous one. A stream shorter than one window yields one frame.
pub fn fixed_count_slice(stream: &EventStream, count_per_frame: usize) -> Result<Vec<Boundary>> {
    if count_per_frame < 1 {
        return Err(EvactError::Validation("count_per_frame must be >= 1".into()));
    }
    let n = stream.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let full = n / count_per_frame;
    let rem = n % count_per_frame;
    let mut ends: Vec<usize> = (1..=full).map(|k| k * count_per_frame).collect();
    if rem > 0 {
        if rem * 2 >= count_per_frame || ends.is_empty() {
            ends.push(n);
        } else {
            *ends.last_mut().unwrap() = n;
        }
    }
    let mut start = 0;
    Ok(ends
        .into_iter()
        .map(|end| {
            let b = Boundary::from_range(stream, start, end);
            start = end;
            b
        })
        .collect())
}

/// Time-aligned windows `[t0 + k*window, t0 + (k+1)*window)`; empty windows
/// are dropped.
pub fn fixed_duration_slice(stream: &EventStream, window_us: u64) -> Result<Vec<Boundary>> {
    if window_us < 1 {
        return Err(EvactError::Validation("window must be >= 1 us".into()));
    }
    let events = stream.events();
    if events.is_empty() {
        return Ok(Vec::new());
    }
    let t0 = events[0].t;
    let mut boundaries = Vec::new();
    let mut start = 0;
    while start < events.len() {
        let k = (events[start].t - t0) / window_us;
        let window_end_t = t0 + (k + 1) * window_us;
        let end = start
            + events[start..]
                .iter()
                .take_while(|e| e.t < window_end_t)
                .count();
        boundaries.push(Boundary::from_range(stream, start, end));
        start = end;
    }
    Ok(boundaries)
}

/// Bilinear-in-time voxel accumulation: each event spreads weight
/// `max(0, 1 - |t* - b|)` over temporal bins, where `t*` is its time
/// normalized to `[0, bins - 1]`. Produces per-bin H x W x 2 grids.
pub fn voxel_slice(stream: &EventStream, bins: usize) -> Result<FrameStack> {
    if bins < 1 {
        return Err(EvactError::Validation("bins must be >= 1".into()));
    }
    let (w, h) = (stream.width(), stream.height());
    let hw = h as usize * w as usize;
    let mut frames = vec![Frame::zeros(h, w, 2); bins];

    let events = stream.events();
    let (t_min, t_max) = match (events.first(), events.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => (0, 0),
    };
    let span = (t_max - t_min) as f64;
    for e in events {
        let t_star = if span == 0.0 {
            0.0
        } else {
            (e.t - t_min) as f64 / span * (bins as f64 - 1.0)
        };
        let base = match e.polarity {
            Polarity::On => 0,
            Polarity::Off => hw,
        };
        let idx = base + e.y as usize * w as usize + e.x as usize;
        let lo = t_star.floor() as usize;
        for b in [lo, lo + 1] {
            if b < bins {
                let weight = (1.0 - (t_star - b as f64).abs()).max(0.0);
                if weight > 0.0 {
                    frames[b].data[idx] += weight as f32;
                }
            }
        }
    }

    // Nominal disjoint boundaries: events assigned to their nearest bin.
    let mut boundaries = Vec::with_capacity(bins);
    let mut start = 0;
    for b in 0..bins {
        let end = if b + 1 == bins {
            events.len()
        } else {
            start
                + events[start..]
                    .iter()
                    .take_while(|e| {
                        let t_star = if span == 0.0 {
                            0.0
                        } else {
                            (e.t - t_min) as f64 / span * (bins as f64 - 1.0)
                        };
                        t_star < b as f64 + 0.5
                    })
                    .count()
        };
        boundaries.push(Boundary::from_range(stream, start, end));
        start = end;
    }

    Ok(FrameStack {
        frames,
        boundaries,
        method: SliceMethod::Voxel,
    })
}
