//! Rendered frame stacks and their on-disk containers (FRS1, PGM).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{EvactError, Result};
use crate::event::{EventStream, Polarity};

const FRS1_MAGIC: &[u8; 4] = b"FRS1";

/// Index and time range of one frame's source slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Boundary {
    pub start: usize,
    pub end: usize,
    pub t_start: u64,
    pub t_end: u64,
}

impl Boundary {
    pub fn from_range(stream: &EventStream, start: usize, end: usize) -> Self {
        let ev = &stream.events()[start..end];
        Boundary {
            start,
            end,
            t_start: ev.first().map_or(0, |e| e.t),
            t_end: ev.last().map_or(0, |e| e.t),
        }
    }

    pub fn count(&self) -> usize {
        self.end - self.start
    }

    /// Midpoint of the covered time range.
    pub fn t_center(&self) -> f64 {
        (self.t_start + self.t_end) as f64 / 2.0
    }
}

/// How a stack's boundaries were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceMethod {
    Afe,
    FixedCount,
    FixedDuration,
    Voxel,
}

/// One H x W x C grid, channel-planar (`data[c*h*w + y*w + x]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub height: u16,
    pub width: u16,
    pub channels: u8,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn zeros(height: u16, width: u16, channels: u8) -> Self {
        Frame {
            height,
            width,
            channels,
            data: vec![0.0; height as usize * width as usize * channels as usize],
        }
    }

    pub fn get(&self, c: u8, y: u16, x: u16) -> f32 {
        let (h, w) = (self.height as usize, self.width as usize);
        self.data[c as usize * h * w + y as usize * w + x as usize]
    }

    fn plane(&self, c: u8) -> &[f32] {
        let hw = self.height as usize * self.width as usize;
        &self.data[c as usize * hw..(c as usize + 1) * hw]
    }

    /// Linear scale of one channel to `[0, 255]` by the frame-wide maximum.
    pub fn scaled_channel_u8(&self, c: u8) -> Vec<u8> {
        let max = self.data.iter().cloned().fold(0.0f32, f32::max);
        self.plane(c)
            .iter()
            .map(|&v| {
                if max == 0.0 {
                    0
                } else {
                    (v * 255.0 / max).round() as u8
                }
            })
            .collect()
    }

    /// 3-channel planar export: channel 0 to red, channel 1 to green, blue zero.
    /// Single-channel frames replicate into all three.
    pub fn export_rgb(&self) -> Vec<u8> {
        let hw = self.height as usize * self.width as usize;
        let mut out = vec![0u8; hw * 3];
        if self.channels == 1 {
            let p = self.scaled_channel_u8(0);
            for c in 0..3 {
                out[c * hw..(c + 1) * hw].copy_from_slice(&p);
            }
        } else {
            out[..hw].copy_from_slice(&self.scaled_channel_u8(0));
            out[hw..2 * hw].copy_from_slice(&self.scaled_channel_u8(1));
        }
        out
    }
}

/// An ordered set of frames with the source ranges they were rendered from.
#[derive(Debug, Clone)]
pub struct FrameStack {
    pub frames: Vec<Frame>,
    pub boundaries: Vec<Boundary>,
    pub method: SliceMethod,
}

impl FrameStack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Renders per-slice 2-channel count frames (channel 0 = ON, channel 1 = OFF).
pub fn render_frames(
    stream: &EventStream,
    boundaries: &[Boundary],
    method: SliceMethod,
) -> Result<FrameStack> {
    let (w, h) = (stream.width(), stream.height());
    let mut frames = Vec::with_capacity(boundaries.len());
    for b in boundaries {
        if b.end > stream.len() || b.start > b.end {
            return Err(EvactError::Validation(format!(
                "boundary [{}, {}) out of range",
                b.start, b.end
            )));
        }
        let mut frame = Frame::zeros(h, w, 2);
        let hw = h as usize * w as usize;
        for e in &stream.events()[b.start..b.end] {
            let base = match e.polarity {
                Polarity::On => 0,
                Polarity::Off => hw,
            };
            frame.data[base + e.y as usize * w as usize + e.x as usize] += 1.0;
        }
        frames.push(frame);
    }
    Ok(FrameStack {
        frames,
        boundaries: boundaries.to_vec(),
        method,
    })
}

/// Writes the stack's 3-channel export views into a FRS1 container:
/// magic `FRS1`, frame count `u32`, then per frame `H u16, W u16, C u8`
/// and raw `u8` channel-planar data. Little-endian throughout.
pub fn write_frames(stack: &FrameStack, path: &Path) -> Result<()> {
    let mut wtr = BufWriter::new(File::create(path)?);
    wtr.write_all(FRS1_MAGIC)?;
    wtr.write_all(&(stack.frames.len() as u32).to_le_bytes())?;
    for f in &stack.frames {
        wtr.write_all(&f.height.to_le_bytes())?;
        wtr.write_all(&f.width.to_le_bytes())?;
        wtr.write_all(&[3u8])?;
        wtr.write_all(&f.export_rgb())?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a FRS1 container back as raw `(height, width, channels, data)` tuples.
pub fn read_frames(path: &Path) -> Result<Vec<(u16, u16, u8, Vec<u8>)>> {
    let mut rdr = BufReader::new(File::open(path)?);
    let mut head = [0u8; 8];
    rdr.read_exact(&mut head)
        .map_err(|_| EvactError::Format("FRS1 header truncated".into()))?;
    if &head[0..4] != FRS1_MAGIC {
        return Err(EvactError::Format("bad FRS1 magic".into()));
    }
    let count = u32::from_le_bytes(head[4..8].try_into().unwrap());
    let mut frames = Vec::with_capacity(count as usize);
    for i in 0..count {
        let mut fh = [0u8; 5];
        rdr.read_exact(&mut fh)
            .map_err(|_| EvactError::Format(format!("FRS1 truncated at frame {i}")))?;
        let h = u16::from_le_bytes([fh[0], fh[1]]);
        let w = u16::from_le_bytes([fh[2], fh[3]]);
        let c = fh[4];
        let mut data = vec![0u8; h as usize * w as usize * c as usize];
        rdr.read_exact(&mut data)
            .map_err(|_| EvactError::Format(format!("FRS1 truncated in frame {i}")))?;
        frames.push((h, w, c, data));
    }
    Ok(frames)
}

/// Writes one channel of a frame as a binary PGM (P5) image.
pub fn write_pgm(frame: &Frame, channel: u8, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", frame.width, frame.height)?;
    w.write_all(&frame.scaled_channel_u8(channel))?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, EventStream};

    fn stream() -> EventStream {
        let events = vec![
            Event {
                t: 0,
                x: 0,
                y: 0,
                polarity: Polarity::On,
            },
            Event {
                t: 1,
                x: 1,
                y: 0,
                polarity: Polarity::On,
            },
            Event {
                t: 2,
                x: 0,
                y: 1,
                polarity: Polarity::On,
            },
            Event {
                t: 3,
                x: 1,
                y: 1,
                polarity: Polarity::On,
            },
        ];
        EventStream::new(events, 2, 2).unwrap()
    }

    #[test]
    fn only_on_events_leave_off_channel_zero() {
        let s = stream();
        let b = [Boundary::from_range(&s, 0, s.len())];
        let stack = render_frames(&s, &b, SliceMethod::Afe).unwrap();
        let f = &stack.frames[0];
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(f.get(1, y, x), 0.0);
                assert_eq!(f.get(0, y, x), 1.0);
            }
        }
    }

    #[test]
    fn equal_counts_scale_to_255() {
        let s = stream();
        let b = [Boundary::from_range(&s, 0, s.len())];
        let stack = render_frames(&s, &b, SliceMethod::Afe).unwrap();
        let on = stack.frames[0].scaled_channel_u8(0);
        assert!(on.iter().all(|&v| v == 255));
    }

    #[test]
    fn golden_export_bytes() {
        // One ON event at (0,0), one OFF at (1,1): red plane has 255 at index 0,
        // green plane 255 at index 3, blue plane zero.
        let events = vec![
            Event {
                t: 0,
                x: 0,
                y: 0,
                polarity: Polarity::On,
            },
            Event {
                t: 1,
                x: 1,
                y: 1,
                polarity: Polarity::Off,
            },
        ];
        let s = EventStream::new(events, 2, 2).unwrap();
        let b = [Boundary::from_range(&s, 0, 2)];
        let stack = render_frames(&s, &b, SliceMethod::Afe).unwrap();
        let rgb = stack.frames[0].export_rgb();
        assert_eq!(
            rgb,
            vec![255, 0, 0, 0, 0, 0, 0, 255, 0, 0, 0, 0]
        );
    }

    #[test]
    fn frs1_round_trip() {
        let s = stream();
        let b = [
            Boundary::from_range(&s, 0, 2),
            Boundary::from_range(&s, 2, 4),
        ];
        let stack = render_frames(&s, &b, SliceMethod::FixedCount).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.frs1");
        write_frames(&stack, &path).unwrap();
        let back = read_frames(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, 2);
        assert_eq!(back[0].2, 3);
        assert_eq!(back[0].3, stack.frames[0].export_rgb());
    }
}
