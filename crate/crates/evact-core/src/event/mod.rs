//! Event-stream data model.

mod io;
mod synth;

pub use io::{read_stream, read_stream_strict, write_stream, StreamFormat};
pub use synth::{generate_scene, texture_mask, MotionSegment, ObjectKind, SyntheticScene};

use crate::error::{EvactError, Result};

/// Brightness-change sign of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Polarity::Off),
            1 => Ok(Polarity::On),
            other => Err(EvactError::Validation(format!(
                "polarity must be 0 or 1, got {other}"
            ))),
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// One sensor event: timestamp in microseconds plus pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

/// A time-ordered event sequence with its sensor geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    events: Vec<Event>,
    width: u16,
    height: u16,
    /// Number of records that had to be re-ordered on read (0 for in-order sources).
    reorder_count: usize,
}

impl EventStream {
    /// Builds a stream, validating geometry, coordinates, and time ordering.
    /// Out-of-order events are repaired with a stable sort; the repair count
    /// is recorded in the stream metadata.
    pub fn new(mut events: Vec<Event>, width: u16, height: u16) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(EvactError::Validation(format!(
                "zero-area geometry {width}x{height}"
            )));
        }
        for (i, e) in events.iter().enumerate() {
            if e.x >= width || e.y >= height {
                return Err(EvactError::Validation(format!(
                    "event {i} at ({}, {}) outside geometry {width}x{height}",
                    e.x, e.y
                )));
            }
        }
        let reorder_count = events.windows(2).filter(|w| w[1].t < w[0].t).count();
        if reorder_count > 0 {
            events.sort_by_key(|e| e.t);
        }
        Ok(Self {
            events,
            width,
            height,
            reorder_count,
        })
    }

    /// Like [`EventStream::new`] but rejects out-of-order input instead of repairing it.
    pub fn new_strict(events: Vec<Event>, width: u16, height: u16) -> Result<Self> {
        if events.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(EvactError::Validation(
                "events out of time order in strict mode".into(),
            ));
        }
        Self::new(events, width, height)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn reorder_count(&self) -> usize {
        self.reorder_count
    }

    /// Duration in microseconds between the first and last event (0 if < 2 events).
    pub fn duration_us(&self) -> u64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0,
        }
    }

    /// Zero-copy view of the full stream.
    pub fn full_slice(&self) -> StreamSlice<'_> {
        StreamSlice {
            parent: self,
            start: 0,
            end: self.events.len(),
        }
    }

    /// Zero-copy view of a half-open index range.
    pub fn slice(&self, start: usize, end: usize) -> Result<StreamSlice<'_>> {
        if start > end || end > self.events.len() {
            return Err(EvactError::Validation(format!(
                "slice [{start}, {end}) out of bounds for stream of length {}",
                self.events.len()
            )));
        }
        Ok(StreamSlice {
            parent: self,
            start,
            end,
        })
    }
}

/// A half-open index range into an [`EventStream`]; never copies events.
#[derive(Debug, Clone, Copy)]
pub struct StreamSlice<'a> {
    parent: &'a EventStream,
    start: usize,
    end: usize,
}

impl<'a> StreamSlice<'a> {
    pub fn events(&self) -> &'a [Event] {
        &self.parent.events[self.start..self.end]
    }

    pub fn parent(&self) -> &'a EventStream {
        self.parent
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn count(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// Inclusive time range of the slice, if non-empty.
    pub fn time_range(&self) -> Option<(u64, u64)> {
        let ev = self.events();
        Some((ev.first()?.t, ev.last()?.t))
    }

    /// Splits at the midpoint of the index range; the left half gets the
    /// extra event when the count is odd.
    pub fn split_mid(&self) -> (StreamSlice<'a>, StreamSlice<'a>) {
        let mid = self.start + (self.count() + 1) / 2;
        (
            StreamSlice {
                parent: self.parent,
                start: self.start,
                end: mid,
            },
            StreamSlice {
                parent: self.parent,
                start: mid,
                end: self.end,
            },
        )
    }
}
