//! Line-delimited JSON sequence files and dataset manifests.
//!
//! A sequence file starts with one header line
//! `{"format":"idtrack-sequence","version":1,"frames":F,"config":{..}}`
//! followed by exactly `F` frame lines
//! `{"t":..,"broadcasts":[..],"slots":[[x,y,phi,gamma],..],"label":[..],"truth":[[x,y,phi,visible],..]}`.
//! Floats are written with shortest round-trip formatting, so a write/read
//! cycle is bit-exact.
//!
//! A manifest is a text file with one sequence path per line, relative to
//! the manifest's directory. Blank lines and lines starting with `#` are
//! ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sim::SimConfig;
use crate::types::{AssignmentLabel, Detection, FrameInput, FrameRecord, RobotTruth, SequenceRecord};
use crate::{Error, Result};

pub const SEQUENCE_FORMAT: &str = "idtrack-sequence";
pub const SEQUENCE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    frames: usize,
    config: SimConfig,
}

#[derive(Serialize, Deserialize)]
struct FrameLine {
    t: u64,
    broadcasts: Vec<f64>,
    slots: Vec<[f64; 4]>,
    label: Vec<usize>,
    truth: Vec<(f64, f64, f64, bool)>,
}

impl From<&FrameRecord> for FrameLine {
    fn from(f: &FrameRecord) -> Self {
        FrameLine {
            t: f.input.t,
            broadcasts: f.input.broadcasts.clone(),
            slots: f.input.slots.iter().map(|d| [d.x, d.y, d.phi, d.gamma]).collect(),
            label: f.label.classes.clone(),
            truth: f.truth.iter().map(|r| (r.x, r.y, r.phi, r.visible)).collect(),
        }
    }
}

impl From<FrameLine> for FrameRecord {
    fn from(l: FrameLine) -> Self {
        FrameRecord {
            input: FrameInput {
                t: l.t,
                broadcasts: l.broadcasts,
                slots: l.slots.into_iter().map(|[x, y, phi, gamma]| Detection { x, y, phi, gamma }).collect(),
            },
            label: AssignmentLabel { classes: l.label },
            truth: l.truth.into_iter().map(|(x, y, phi, visible)| RobotTruth { x, y, phi, visible }).collect(),
        }
    }
}

pub fn write_sequence(record: &SequenceRecord, path: &Path) -> Result<()> {
    record.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_sequence_to(record, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_sequence_to(record: &SequenceRecord, w: &mut impl Write) -> std::io::Result<()> {
    let header = Header {
        format: SEQUENCE_FORMAT.to_string(),
        version: SEQUENCE_VERSION,
        frames: record.frames.len(),
        config: record.config.clone(),
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for f in &record.frames {
        serde_json::to_writer(&mut *w, &FrameLine::from(f))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_sequence(path: &Path) -> Result<SequenceRecord> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::format(path, "empty file")),
    };
    let header: Header =
        serde_json::from_str(&header_line).map_err(|e| Error::format(path, format!("header: {e}")))?;
    if header.format != SEQUENCE_FORMAT {
        return Err(Error::format(path, format!("unknown format tag {:?}", header.format)));
    }
    if header.version != SEQUENCE_VERSION {
        return Err(Error::Version { found: header.version, expected: SEQUENCE_VERSION });
    }
    let mut frames = Vec::with_capacity(header.frames);
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fl: FrameLine =
            serde_json::from_str(&line).map_err(|e| Error::format(path, format!("frame line {}: {e}", k + 2)))?;
        frames.push(FrameRecord::from(fl));
    }
    if frames.len() != header.frames {
        return Err(Error::format(
            path,
            format!("truncated: header declares {} frames, found {}", header.frames, frames.len()),
        ));
    }
    let record = SequenceRecord { config: header.config, frames };
    record.validate()?;
    Ok(record)
}

pub fn write_manifest(path: &Path, entries: &[PathBuf]) -> Result<()> {
    let mut text = String::from("# idtrack manifest\n");
    for e in entries {
        text.push_str(&e.to_string_lossy());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Returns the sequence paths listed in a manifest, resolved against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

pub fn load_manifest(path: &Path) -> Result<Vec<SequenceRecord>> {
    read_manifest(path)?.iter().map(|p| read_sequence(p)).collect()
}
