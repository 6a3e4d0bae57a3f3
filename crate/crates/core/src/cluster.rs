//! DBSCAN over the superimposed cloud and time-window slicing of the
//! resulting clusters.
//!
//! Window slices are subsets of a global cluster restricted to a frame
//! range. They are never re-clustered: [`slice_windows`] only takes a
//! [`Cluster`] and filters its indices.

use std::collections::VecDeque;
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{voxelize_positions, TimedPoint, VoxelSet};
use crate::grid::GridIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    /// Neighbors (self included) that make a point core.
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps: 0.8,
            min_pts: 5,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidParam(format!(
                "cluster.eps must be > 0, got {}",
                self.eps
            )));
        }
        if self.min_pts < 1 {
            return Err(Error::InvalidParam("cluster.min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-point DBSCAN output. `labels[i]` is `None` for noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    pub labels: Vec<Option<u32>>,
    pub core: Vec<bool>,
    pub cluster_count: u32,
}

pub fn dbscan(points: &[TimedPoint], params: &DbscanParams) -> Result<Labeling> {
    let pos: Vec<[f64; 3]> = points.iter().map(TimedPoint::pos).collect();
    dbscan_positions(&pos, params)
}

/// Classical DBSCAN with a grid index.
///
/// Cluster ids follow the scan order: cluster `k` is the one containing the
/// `k`-th core point (by input index) that is not density-reachable from an
/// earlier core. A border point takes the lowest id among the clusters whose
/// cores reach it, which is the cluster that would claim it first in a
/// sequential scan. The result does not depend on the rayon thread count.
pub fn dbscan_positions(pos: &[[f64; 3]], params: &DbscanParams) -> Result<Labeling> {
    params.validate()?;
    let n = pos.len();
    if n == 0 {
        return Ok(Labeling {
            labels: Vec::new(),
            core: Vec::new(),
            cluster_count: 0,
        });
    }
    let grid = GridIndex::build(pos, params.eps)?;
    let core: Vec<bool> = pos
        .par_iter()
        .map(|q| grid.count_within(*q, params.min_pts) >= params.min_pts)
        .collect();

    let mut labels: Vec<Option<u32>> = vec![None; n];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        labels[seed] = Some(next);
        queue.push_back(seed);
        while let Some(q) = queue.pop_front() {
            grid.visit_within(pos[q], |j| {
                if core[j] && labels[j].is_none() {
                    labels[j] = Some(next);
                    queue.push_back(j);
                }
                ControlFlow::Continue(())
            });
        }
        next += 1;
    }

    let border: Vec<(usize, Option<u32>)> = (0..n)
        .into_par_iter()
        .filter(|&i| !core[i])
        .map(|i| {
            let mut best: Option<u32> = None;
            grid.visit_within(pos[i], |j| {
                if core[j] {
                    let l = labels[j];
                    if best.is_none() || l < best {
                        best = l;
                    }
                }
                ControlFlow::Continue(())
            });
            (i, best)
        })
        .collect();
    for (i, l) in border {
        labels[i] = l;
    }

    Ok(Labeling {
        labels,
        core,
        cluster_count: next,
    })
}

/// Count, occupied voxels and density of a point set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterStats {
    pub num: usize,
    pub voxels: VoxelSet,
    /// Points per cubic meter of occupied voxel volume.
    pub density: f64,
}

impl ClusterStats {
    pub fn from_positions<I>(positions: I, resolution: f64) -> Result<Self>
    where
        I: IntoIterator<Item = [f64; 3]>,
    {
        let pos: Vec<[f64; 3]> = positions.into_iter().collect();
        let voxels = voxelize_positions(pos.iter().copied(), resolution)?;
        let num = pos.len();
        Ok(Self {
            num,
            density: num as f64 / voxels.volume(),
            voxels,
        })
    }

    pub fn volume(&self) -> f64 {
        self.voxels.volume()
    }
}

/// A global cluster: the points DBSCAN labelled `id`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub id: u32,
    /// Sorted, duplicate-free indices into the global point list.
    pub point_indices: Vec<usize>,
    pub stats: ClusterStats,
}

pub fn extract_global_clusters(
    points: &[TimedPoint],
    labels: &[Option<u32>],
    voxel_resolution: f64,
) -> Result<Vec<Cluster>> {
    if points.len() != labels.len() {
        return Err(Error::InvalidParam(format!(
            "{} labels for {} points",
            labels.len(),
            points.len()
        )));
    }
    let count = labels.iter().flatten().map(|&l| l + 1).max().unwrap_or(0) as usize;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            members[*l as usize].push(i);
        }
    }
    members
        .into_par_iter()
        .enumerate()
        .filter(|(_, idx)| !idx.is_empty())
        .map(|(id, point_indices)| {
            let stats = ClusterStats::from_positions(
                point_indices.iter().map(|&i| points[i].pos()),
                voxel_resolution,
            )?;
            Ok(Cluster {
                id: id as u32,
                point_indices,
                stats,
            })
        })
        .collect()
}

/// The part of a global cluster observed in frames
/// `[start_frame, start_frame + length)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSlice {
    pub cluster_id: u32,
    pub start_frame: usize,
    pub length: usize,
    pub point_indices: Vec<usize>,
    /// `None` when the window holds no points.
    pub stats: Option<ClusterStats>,
}

impl WindowSlice {
    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }
}

/// One slice per window start in `0..=frame_count - length`.
pub fn slice_windows(
    cluster: &Cluster,
    points: &[TimedPoint],
    frame_count: usize,
    length: usize,
    voxel_resolution: f64,
) -> Result<Vec<WindowSlice>> {
    if length == 0 {
        return Err(Error::InvalidParam("window length must be >= 1".into()));
    }
    if length > frame_count {
        return Err(Error::WindowTooLong {
            length,
            frames: frame_count,
        });
    }
    let mut by_frame: Vec<(usize, usize)> = cluster
        .point_indices
        .iter()
        .map(|&i| (points[i].frame_index as usize, i))
        .collect();
    by_frame.sort_unstable();

    (0..=frame_count - length)
        .into_par_iter()
        .map(|start| {
            let lo = by_frame.partition_point(|&(f, _)| f < start);
            let hi = by_frame.partition_point(|&(f, _)| f < start + length);
            let mut point_indices: Vec<usize> = by_frame[lo..hi].iter().map(|&(_, i)| i).collect();
            if !point_indices.is_sorted() {
                point_indices.sort_unstable();
            }
            let stats = if point_indices.is_empty() {
                None
            } else {
                Some(ClusterStats::from_positions(
                    point_indices.iter().map(|&i| points[i].pos()),
                    voxel_resolution,
                )?)
            };
            Ok(WindowSlice {
                cluster_id: cluster.id,
                start_frame: start,
                length,
                point_indices,
                stats,
            })
        })
        .collect()
}
