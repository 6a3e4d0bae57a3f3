//! Points, bounds, and voxel occupancy.
//!
//! Cluster volume is measured as occupied-voxel count times cell volume at a
//! fixed resolution, so a single-point cluster still has a positive volume and
//! overlap between two point sets is a plain set intersection over cells.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// LiDAR unit that produced a return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    /// Livox Avia: long range, noisy.
    Avia,
    /// Livox Mid-360.
    Mid360,
}

impl Sensor {
    pub const ALL: [Sensor; 2] = [Sensor::Avia, Sensor::Mid360];

    pub fn as_str(self) -> &'static str {
        match self {
            Sensor::Avia => "avia",
            Sensor::Mid360 => "mid360",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Sensor::Avia => 0,
            Sensor::Mid360 => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Sensor::Avia),
            1 => Some(Sensor::Mid360),
            _ => None,
        }
    }
}

impl fmt::Display for Sensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sensor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "avia" => Ok(Sensor::Avia),
            "mid360" => Ok(Sensor::Mid360),
            other => Err(format!("unknown sensor `{other}`")),
        }
    }
}

/// A single LiDAR return in the fused world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Seconds since sequence start.
    pub t: f64,
    pub sensor: Sensor,
    pub frame_index: u32,
}

impl TimedPoint {
    pub fn new(pos: [f64; 3], t: f64, sensor: Sensor, frame_index: u32) -> Self {
        Self {
            x: pos[0],
            y: pos[1],
            z: pos[2],
            t,
            sensor,
            frame_index,
        }
    }

    #[inline]
    pub fn pos(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.t.is_finite()
    }

    #[inline]
    pub fn dist2(&self, other: &TimedPoint) -> f64 {
        dist2(self.pos(), other.pos())
    }
}

#[inline]
pub fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if (0..3).any(|i| min[i].is_nan() || max[i].is_nan() || min[i] > max[i]) {
            return Err(Error::InvalidParam(format!(
                "aabb min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    /// Tight bounds of a point set; `None` when empty.
    pub fn from_positions<I: IntoIterator<Item = [f64; 3]>>(positions: I) -> Option<Self> {
        let mut it = positions.into_iter();
        let first = it.next()?;
        let mut b = Aabb {
            min: first,
            max: first,
        };
        for p in it {
            b.expand(p);
        }
        Some(b)
    }

    pub fn expand(&mut self, p: [f64; 3]) {
        for (i, v) in p.into_iter().enumerate() {
            self.min[i] = self.min[i].min(v);
            self.max[i] = self.max[i].max(v);
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }
}

/// Integer voxel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelKey(pub [i64; 3]);

impl VoxelKey {
    #[inline]
    pub fn of(pos: [f64; 3], resolution: f64) -> Self {
        VoxelKey([
            (pos[0] / resolution).floor() as i64,
            (pos[1] / resolution).floor() as i64,
            (pos[2] / resolution).floor() as i64,
        ])
    }
}

/// Distinct occupied voxels of a point set at a fixed resolution.
///
/// Cells are kept sorted and deduplicated, so two sets built from the same
/// points compare equal and set operations are linear merges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoxelSet {
    resolution: f64,
    cells: Vec<VoxelKey>,
}

impl VoxelSet {
    /// Builds a set from explicit cells. At least one cell is required.
    pub fn from_cells<I: IntoIterator<Item = VoxelKey>>(resolution: f64, cells: I) -> Result<Self> {
        check_resolution(resolution)?;
        let mut cells: Vec<VoxelKey> = cells.into_iter().collect();
        if cells.is_empty() {
            return Err(Error::EmptyCluster);
        }
        cells.sort_unstable();
        cells.dedup();
        Ok(Self { resolution, cells })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cells(&self) -> &[VoxelKey] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, key: &VoxelKey) -> bool {
        self.cells.binary_search(key).is_ok()
    }

    /// Occupied volume in cubic meters.
    pub fn volume(&self) -> f64 {
        self.cells.len() as f64 * self.resolution.powi(3)
    }

    /// Union of two sets at the same resolution, e.g. voxelizations of
    /// disjoint partitions of one point list.
    pub fn merge(&self, other: &VoxelSet) -> Result<VoxelSet> {
        same_resolution(self, other)?;
        let mut cells = Vec::with_capacity(self.cells.len() + other.cells.len());
        cells.extend_from_slice(&self.cells);
        cells.extend_from_slice(&other.cells);
        cells.sort_unstable();
        cells.dedup();
        Ok(VoxelSet {
            resolution: self.resolution,
            cells,
        })
    }

    /// Sizes of the intersection and union.
    fn overlap_counts(&self, other: &VoxelSet) -> (usize, usize) {
        let (a, b) = (&self.cells, &other.cells);
        let (mut i, mut j, mut inter) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        (inter, a.len() + b.len() - inter)
    }
}

fn check_resolution(resolution: f64) -> Result<()> {
    if resolution.is_finite() && resolution > 0.0 {
        Ok(())
    } else {
        Err(Error::BadResolution(resolution))
    }
}

fn same_resolution(a: &VoxelSet, b: &VoxelSet) -> Result<()> {
    if a.resolution.to_bits() == b.resolution.to_bits() {
        Ok(())
    } else {
        Err(Error::ResolutionMismatch(a.resolution, b.resolution))
    }
}

/// Voxelizes a point list. Each point lands in
/// `(floor(x/res), floor(y/res), floor(z/res))`.
pub fn voxelize(points: &[TimedPoint], resolution: f64) -> Result<VoxelSet> {
    voxelize_positions(points.iter().map(TimedPoint::pos), resolution)
}

pub fn voxelize_positions<I>(positions: I, resolution: f64) -> Result<VoxelSet>
where
    I: IntoIterator<Item = [f64; 3]>,
{
    check_resolution(resolution)?;
    let cells: Vec<VoxelKey> = positions
        .into_iter()
        .map(|p| VoxelKey::of(p, resolution))
        .collect();
    VoxelSet::from_cells(resolution, cells)
}

/// Intersection over union of two occupied-voxel sets, in `[0, 1]`.
pub fn voxel_iou(a: &VoxelSet, b: &VoxelSet) -> Result<f64> {
    same_resolution(a, b)?;
    let (inter, union) = a.overlap_counts(b);
    Ok(inter as f64 / union as f64)
}
