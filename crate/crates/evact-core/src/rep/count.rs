//! Per-pixel event-count images and the difference rate between the two
//! halves of a slice.

use crate::error::{EvactError, Result};
use crate::event::StreamSlice;

/// H x W grid of per-pixel event counts, both polarities pooled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountImage {
    counts: Vec<u32>,
    width: u16,
    height: u16,
}

impl CountImage {
    pub fn zeros(width: u16, height: u16) -> Self {
        Self {
            counts: vec![0; width as usize * height as usize],
            width,
            height,
        }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn get(&self, x: u16, y: u16) -> u32 {
        self.counts[y as usize * self.width as usize + x as usize]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Tallies the slice's events into a count image, polarities pooled.
pub fn count_image(slice: &StreamSlice<'_>, width: u16, height: u16) -> CountImage {
    let mut img = CountImage::zeros(width, height);
    for e in slice.events() {
        img.counts[e.y as usize * width as usize + e.x as usize] += 1;
    }
    img
}

/// Normalized L1 distance between the count images of a slice's two halves:
/// `R = sum(|a - b|) / (parent_count / 2)`, in `[0, 2]`.
pub fn difference_rate(
    first_half: &CountImage,
    second_half: &CountImage,
    parent_count: u64,
) -> Result<f64> {
    if first_half.width != second_half.width || first_half.height != second_half.height {
        return Err(EvactError::shape(
            "difference_rate",
            &[first_half.height as usize, first_half.width as usize],
            &[second_half.height as usize, second_half.width as usize],
        ));
    }
    if parent_count == 0 {
        return Err(EvactError::DegenerateSplit);
    }
    let abs_diff: u64 = first_half
        .counts
        .iter()
        .zip(&second_half.counts)
        .map(|(&a, &b)| (a as i64 - b as i64).unsigned_abs())
        .sum();
    Ok(abs_diff as f64 / (parent_count as f64 / 2.0))
}
