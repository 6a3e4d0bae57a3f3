//! Frame sequences, ground truth and trajectories on disk.
//!
//! Sequence CSV: header `frame,t,sensor,x,y,z`, one row per return. A row
//! `k,t,,,,` (or just `k,t`) declares frame `k` without returns. Frames whose
//! index is skipped entirely get a timestamp interpolated between their
//! neighbours.
//!
//! Sequence binary (little endian): magic `SKTL`, `u32` version, then per
//! frame `u32 index, f64 t, u32 count, count x 3 f64` positions. Version 2
//! appends `count x u8` sensor tags (0 = avia, 1 = mid360) after the
//! positions of each frame; version 1 files carry no tags and load as avia.
//!
//! Floats are written with the shortest representation that parses back to
//! the same bits, so CSV round trips are exact for finite values.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Sensor, TimedPoint};
use crate::trajectory::{Trajectory, TrajectorySample};

pub const BIN_MAGIC: &[u8; 4] = b"SKTL";
pub const BIN_VERSION: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceFormat {
    Csv,
    Bin,
}

impl SequenceFormat {
    /// `.bin` / `.sktl` select the binary format, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("bin") || ext.eq_ignore_ascii_case("sktl") => {
                SequenceFormat::Bin
            }
            _ => SequenceFormat::Csv,
        }
    }
}

/// All returns of one scan interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_index: u32,
    pub t: f64,
    pub points: Vec<TimedPoint>,
}

impl Frame {
    pub fn new(frame_index: u32, t: f64) -> Self {
        Self {
            frame_index,
            t,
            points: Vec::new(),
        }
    }

    /// Adds a return, stamping it with this frame's index and time.
    pub fn push(&mut self, pos: [f64; 3], sensor: Sensor) {
        self.points
            .push(TimedPoint::new(pos, self.t, sensor, self.frame_index));
    }
}

/// An ordered, validated frame sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceCloud {
    frames: Vec<Frame>,
}

impl SequenceCloud {
    /// Validates ordering: at least one frame, indices contiguous from 0,
    /// non-decreasing timestamps, and points stamped with their frame.
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptySequence);
        }
        for (k, f) in frames.iter().enumerate() {
            if f.frame_index as usize != k {
                return Err(Error::InvalidParam(format!(
                    "frame at position {k} has index {}",
                    f.frame_index
                )));
            }
            if !f.t.is_finite() || f.t < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "frame {k} has invalid timestamp {}",
                    f.t
                )));
            }
            if k > 0 && f.t < frames[k - 1].t {
                return Err(Error::TimeRegression(k as u32));
            }
            if let Some(p) = f
                .points
                .iter()
                .find(|p| p.frame_index != f.frame_index || p.t.to_bits() != f.t.to_bits())
            {
                return Err(Error::InvalidParam(format!(
                    "point stamped frame {} t {} inside frame {k}",
                    p.frame_index, p.t
                )));
            }
            if f.points.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidParam(format!(
                    "non-finite coordinate in frame {k}"
                )));
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    /// Frame count.
    pub fn n(&self) -> usize {
        self.frames.len()
    }

    pub fn duration(&self) -> f64 {
        self.frames[self.frames.len() - 1].t - self.frames[0].t
    }

    pub fn point_count(&self) -> usize {
        self.frames.iter().map(|f| f.points.len()).sum()
    }

    pub fn frame_times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }
}

/// Load-time diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    /// Returns dropped for non-finite coordinates.
    pub rejected_non_finite: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtSample {
    pub t: f64,
    pub pos: [f64; 3],
}

/// Reference positions with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    samples: Vec<GtSample>,
}

impl GroundTruth {
    pub fn new(samples: Vec<GtSample>) -> Result<Self> {
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].t == w[0].t {
                return Err(Error::DuplicateGtTimestamp {
                    line: i + 2,
                    t: w[1].t,
                });
            }
            if w[1].t < w[0].t {
                return Err(Error::GtTimeRegression { line: i + 2 });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[GtSample] {
        &self.samples
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

/// Non-blank, non-comment lines with 1-based line numbers. A first line
/// whose first field does not parse as a number is taken as a header.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut first = true;
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .filter(move |(_, l)| {
            if first {
                first = false;
                let head = l.split(',').next().unwrap_or("").trim();
                return head.parse::<f64>().is_ok();
            }
            true
        })
}

fn field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| Error::parse(line, format!("bad {name} `{}`", raw.trim())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Sequences
// ---------------------------------------------------------------------------

pub fn load_sequence(path: &Path, format: SequenceFormat) -> Result<(SequenceCloud, LoadStats)> {
    match format {
        SequenceFormat::Csv => parse_sequence_csv(&read_text(path)?),
        SequenceFormat::Bin => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_sequence_bin(&bytes)
        }
    }
}

pub fn save_sequence(seq: &SequenceCloud, path: &Path, format: SequenceFormat) -> Result<()> {
    let bytes = match format {
        SequenceFormat::Csv => sequence_to_csv(seq).into_bytes(),
        SequenceFormat::Bin => sequence_to_bin(seq),
    };
    write_file(path, &bytes)
}

pub fn parse_sequence_csv(text: &str) -> Result<(SequenceCloud, LoadStats)> {
    // (frame, t, points) in file order; gaps filled afterwards.
    let mut declared: Vec<(u32, f64, Vec<TimedPoint>)> = Vec::new();
    let mut stats = LoadStats::default();

    for (line, row) in data_lines(text) {
        let cols: Vec<&str> = row.split(',').map(str::trim).collect();
        let marker = cols.len() == 2 || (cols.len() == 6 && cols[2..].iter().all(|c| c.is_empty()));
        if !marker && cols.len() != 6 {
            return Err(Error::parse(
                line,
                format!(
                    "expected 6 fields (frame,t,sensor,x,y,z), got {}",
                    cols.len()
                ),
            ));
        }
        let frame: u32 = field(line, "frame", cols[0])?;
        let t: f64 = field(line, "t", cols[1])?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::parse(line, format!("bad t `{}`", cols[1])));
        }

        match declared.last() {
            Some(&(prev, prev_t, _)) if frame == prev => {
                if prev_t.to_bits() != t.to_bits() {
                    return Err(Error::parse(
                        line,
                        format!("frame {frame} has timestamps {prev_t} and {t}"),
                    ));
                }
            }
            Some(&(prev, _, _)) if frame < prev => {
                return Err(Error::FrameOrder {
                    line,
                    frame,
                    previous: prev,
                });
            }
            _ => declared.push((frame, t, Vec::new())),
        }
        if marker {
            continue;
        }

        let sensor: Sensor = cols[2].parse().map_err(|e: String| Error::parse(line, e))?;
        let x: f64 = field(line, "x", cols[3])?;
        let y: f64 = field(line, "y", cols[4])?;
        let z: f64 = field(line, "z", cols[5])?;
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            stats.rejected_non_finite += 1;
            continue;
        }
        let last = declared.last_mut().expect("frame pushed above");
        last.2.push(TimedPoint::new([x, y, z], t, sensor, frame));
    }

    if declared.is_empty() {
        return Err(Error::EmptySequence);
    }
    if declared[0].0 != 0 {
        return Err(Error::parse(
            0,
            format!(
                "sequence starts at frame {}; declare leading empty frames with `k,t` rows",
                declared[0].0
            ),
        ));
    }

    let mut frames: Vec<Frame> = Vec::with_capacity(declared.last().unwrap().0 as usize + 1);
    let mut prev: Option<(u32, f64)> = None;
    for (idx, t, points) in declared {
        if let Some((pi, pt)) = prev {
            for k in pi + 1..idx {
                let a = (k - pi) as f64 / (idx - pi) as f64;
                frames.push(Frame::new(k, pt + (t - pt) * a));
            }
        }
        frames.push(Frame {
            frame_index: idx,
            t,
            points,
        });
        prev = Some((idx, t));
    }
    Ok((SequenceCloud::new(frames)?, stats))
}

pub fn sequence_to_csv(seq: &SequenceCloud) -> String {
    let mut out = String::from("frame,t,sensor,x,y,z\n");
    for f in seq.frames() {
        if f.points.is_empty() {
            let _ = writeln!(out, "{},{},,,,", f.frame_index, f.t);
        }
        for p in &f.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                f.frame_index, f.t, p.sensor, p.x, p.y, p.z
            );
        }
    }
    out
}

pub fn sequence_to_bin(seq: &SequenceCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + seq.n() * 16 + seq.point_count() * 25);
    out.extend_from_slice(BIN_MAGIC);
    out.extend_from_slice(&BIN_VERSION.to_le_bytes());
    for f in seq.frames() {
        out.extend_from_slice(&f.frame_index.to_le_bytes());
        out.extend_from_slice(&f.t.to_le_bytes());
        out.extend_from_slice(&(f.points.len() as u32).to_le_bytes());
        for p in &f.points {
            for c in p.pos() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out.extend(f.points.iter().map(|p| p.sensor.tag()));
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            return Err(Error::BadBinary(format!("truncated at byte {}", self.at)));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.at == self.buf.len()
    }
}

pub fn parse_sequence_bin(bytes: &[u8]) -> Result<(SequenceCloud, LoadStats)> {
    if bytes.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut cur = Cursor { buf: bytes, at: 0 };
    if cur.take(4)? != BIN_MAGIC {
        return Err(Error::BadBinary("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != 1 && version != 2 {
        return Err(Error::BadBinary(format!("unsupported version {version}")));
    }
    let mut stats = LoadStats::default();
    let mut frames: Vec<Frame> = Vec::new();
    while !cur.done() {
        let index = cur.u32()?;
        let t = cur.f64()?;
        let count = cur.u32()? as usize;
        if index as usize != frames.len() {
            return Err(Error::BadBinary(format!(
                "frame {index} found at position {}",
                frames.len()
            )));
        }
        if let Some(prev) = frames.last() {
            if t < prev.t {
                return Err(Error::TimeRegression(index));
            }
        }
        let mut pos = Vec::with_capacity(count);
        for _ in 0..count {
            pos.push([cur.f64()?, cur.f64()?, cur.f64()?]);
        }
        let tags: Vec<Sensor> = if version >= 2 {
            cur.take(count)?
                .iter()
                .map(|&b| {
                    Sensor::from_tag(b)
                        .ok_or_else(|| Error::BadBinary(format!("bad sensor tag {b}")))
                })
                .collect::<Result<_>>()?
        } else {
            vec![Sensor::Avia; count]
        };
        let mut frame = Frame::new(index, t);
        for (p, s) in pos.into_iter().zip(tags) {
            if p.iter().all(|c| c.is_finite()) {
                frame.push(p, s);
            } else {
                stats.rejected_non_finite += 1;
            }
        }
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok((SequenceCloud::new(frames)?, stats))
}

// ---------------------------------------------------------------------------
// Ground truth, timestamps, trajectories
// ---------------------------------------------------------------------------

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    parse_ground_truth(&read_text(path)?)
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth> {
    let mut samples: Vec<GtSample> = Vec::new();
    for (line, row) in data_lines(text) {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                line,
                format!("expected 4 fields (t,x,y,z), got {}", cols.len()),
            ));
        }
        let t: f64 = field(line, "t", cols[0])?;
        let pos = [
            field(line, "x", cols[1])?,
            field(line, "y", cols[2])?,
            field(line, "z", cols[3])?,
        ];
        if !t.is_finite() || pos.iter().any(|c: &f64| !c.is_finite()) {
            return Err(Error::parse(line, "non-finite value"));
        }
        if let Some(prev) = samples.last() {
            if t == prev.t {
                return Err(Error::DuplicateGtTimestamp { line, t });
            }
            if t < prev.t {
                return Err(Error::GtTimeRegression { line });
            }
        }
        samples.push(GtSample { t, pos });
    }
    if samples.is_empty() {
        return Err(Error::EmptySequence);
    }
    GroundTruth::new(samples)
}

pub fn save_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    let mut out = String::from("t,x,y,z\n");
    for s in gt.samples() {
        let _ = writeln!(out, "{},{},{},{}", s.t, s.pos[0], s.pos[1], s.pos[2]);
    }
    write_file(path, out.as_bytes())
}

/// Query timestamps from the first column of a CSV (a ground-truth file
/// works as-is). Must be strictly increasing.
pub fn load_timestamps(path: &Path) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    let mut ts: Vec<f64> = Vec::new();
    for (line, row) in data_lines(&text) {
        let t: f64 = field(line, "t", row.split(',').next().unwrap_or(""))?;
        if !t.is_finite() {
            return Err(Error::parse(line, "non-finite timestamp"));
        }
        if let Some(&prev) = ts.last() {
            if t <= prev {
                return Err(Error::parse(line, "timestamps must be strictly increasing"));
            }
        }
        ts.push(t);
    }
    if ts.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(ts)
}

pub fn trajectory_to_csv(samples: &[TrajectorySample]) -> String {
    let mut out = String::from("t,x,y,z,detected\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.t,
            s.pos[0],
            s.pos[1],
            s.pos[2],
            u8::from(s.detected)
        );
    }
    out
}

/// Writes `t,x,y,z,detected` rows in timestamp order.
pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    if traj.samples.is_empty() {
        return Err(Error::NothingToSave);
    }
    write_file(path, trajectory_to_csv(&traj.samples).as_bytes())
}

pub fn load_trajectory(path: &Path) -> Result<Vec<TrajectorySample>> {
    parse_trajectory(&read_text(path)?)
}

pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectorySample>> {
    let mut out: Vec<TrajectorySample> = Vec::new();
    for (line, row) in data_lines(text) {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::parse(
                line,
                format!("expected 5 fields (t,x,y,z,detected), got {}", cols.len()),
            ));
        }
        let t: f64 = field(line, "t", cols[0])?;
        let pos = [
            field(line, "x", cols[1])?,
            field(line, "y", cols[2])?,
            field(line, "z", cols[3])?,
        ];
        let detected = match cols[4].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::parse(line, format!("bad detected flag `{other}`"))),
        };
        if let Some(prev) = out.last() {
            if t <= prev.t {
                return Err(Error::parse(line, "timestamps must be strictly increasing"));
            }
        }
        out.push(TrajectorySample { t, pos, detected });
    }
    Ok(out)
}
