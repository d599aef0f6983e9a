//! EVT1 binary and CSV readers/writers.
//!
//! EVT1 layout (little-endian): magic `EVT1`, width `u16`, height `u16`,
//! count `u64`, then 16-byte records of `t u64, x u16, y u16, polarity u8`
//! plus 3 pad bytes. The fixed stride makes index-based slicing trivial.
//! CSV is `t,x,y,p`, one event per line, optional header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{EvactError, Result};
use crate::event::{Event, EventStream, Polarity};

const EVT1_MAGIC: &[u8; 4] = b"EVT1";
const RECORD_LEN: usize = 16;

/// On-disk encodings understood by [`read_stream`] / [`write_stream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    Evt1,
    /// CSV carries no geometry, so the caller supplies it.
    Csv { width: u16, height: u16 },
}

impl StreamFormat {
    /// Guesses the format from a file extension (`.evt1` / `.csv`).
    pub fn from_path(path: &Path, csv_geometry: Option<(u16, u16)>) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("evt1") => Ok(StreamFormat::Evt1),
            Some("csv") => {
                let (width, height) = csv_geometry.ok_or_else(|| {
                    EvactError::Validation("CSV input requires explicit geometry".into())
                })?;
                Ok(StreamFormat::Csv { width, height })
            }
            other => Err(EvactError::Format(format!(
                "cannot infer format from extension {other:?}"
            ))),
        }
    }
}

pub fn read_stream(path: &Path, format: StreamFormat) -> Result<EventStream> {
    read_impl(path, format, false)
}

/// Strict variant: out-of-order input is an error rather than repaired.
pub fn read_stream_strict(path: &Path, format: StreamFormat) -> Result<EventStream> {
    read_impl(path, format, true)
}

fn read_impl(path: &Path, format: StreamFormat, strict: bool) -> Result<EventStream> {
    let (events, width, height) = match format {
        StreamFormat::Evt1 => read_evt1(path)?,
        StreamFormat::Csv { width, height } => (read_csv(path)?, width, height),
    };
    if strict {
        EventStream::new_strict(events, width, height)
    } else {
        EventStream::new(events, width, height)
    }
}

fn read_evt1(path: &Path) -> Result<(Vec<Event>, u16, u16)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    reader
        .read_exact(&mut header)
        .map_err(|_| EvactError::Format("EVT1 header truncated".into()))?;
    if &header[0..4] != EVT1_MAGIC {
        return Err(EvactError::Format("bad EVT1 magic".into()));
    }
    let width = u16::from_le_bytes([header[4], header[5]]);
    let height = u16::from_le_bytes([header[6], header[7]]);
    let count = u64::from_le_bytes(header[8..16].try_into().unwrap());

    let mut events = Vec::with_capacity(count as usize);
    let mut rec = [0u8; RECORD_LEN];
    for i in 0..count {
        reader
            .read_exact(&mut rec)
            .map_err(|_| EvactError::Format(format!("EVT1 truncated at record {i}")))?;
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let polarity = Polarity::from_u8(rec[12])
            .map_err(|_| EvactError::Validation(format!("record {i}: bad polarity {}", rec[12])))?;
        events.push(Event { t, x, y, polarity });
    }
    Ok((events, width, height))
}

fn read_csv(path: &Path) -> Result<Vec<Event>> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        // Optional header line.
        if lineno == 0 && line.chars().next().is_some_and(|c| c.is_alphabetic()) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(EvactError::Format(format!(
                "line {}: expected 4 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| EvactError::Format(format!("line {}: bad {what} `{s}`", lineno + 1)))
        };
        let t = parse(fields[0], "timestamp")?;
        let x = parse(fields[1], "x")? as u16;
        let y = parse(fields[2], "y")? as u16;
        let polarity = Polarity::from_u8(parse(fields[3], "polarity")? as u8)
            .map_err(|_| EvactError::Validation(format!("record {lineno}: bad polarity")))?;
        events.push(Event { t, x, y, polarity });
    }
    Ok(events)
}

pub fn write_stream(stream: &EventStream, path: &Path, format: StreamFormat) -> Result<()> {
    match format {
        StreamFormat::Evt1 => write_evt1(stream, path),
        StreamFormat::Csv { .. } => write_csv(stream, path),
    }
}

fn write_evt1(stream: &EventStream, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(EVT1_MAGIC)?;
    w.write_all(&stream.width().to_le_bytes())?;
    w.write_all(&stream.height().to_le_bytes())?;
    w.write_all(&(stream.len() as u64).to_le_bytes())?;
    for e in stream.events() {
        w.write_all(&e.t.to_le_bytes())?;
        w.write_all(&e.x.to_le_bytes())?;
        w.write_all(&e.y.to_le_bytes())?;
        w.write_all(&[e.polarity.as_u8(), 0, 0, 0])?;
    }
    w.flush()?;
    Ok(())
}

fn write_csv(stream: &EventStream, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in stream.events() {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.polarity.as_u8())?;
    }
    w.flush()?;
    Ok(())
}
