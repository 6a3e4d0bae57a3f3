//! Density-consistency and voxel-overlap scoring of global clusters.
//!
//! A stationary surface keeps accumulating returns, so a short window sees a
//! small fraction of its global density and nearly the same voxels from one
//! window to the next. A mover fills each window at roughly its global
//! density and keeps entering new voxels. Per cluster:
//!
//! ```text
//! score_dens = mean over non-empty windows of exp(R)      R = rho_local / rho_global
//! score_iou  = mean over consecutive windows of ln(1 / max(IoU, iou_floor))
//! total      = score_dens + lambda * score_iou
//! ```
//!
//! With `normalize = false` both means become plain sums.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, WindowSlice};
use crate::error::{Error, Result};
use crate::geometry::voxel_iou;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringConfig {
    /// Weight of the overlap term.
    pub lambda: f64,
    /// IoU values are clamped up to this before taking the log.
    pub iou_floor: f64,
    /// Clusters with fewer non-empty windows are not scored.
    pub min_active_windows: usize,
    /// Divide both sums by their term counts.
    pub normalize: bool,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            iou_floor: 1e-3,
            min_active_windows: 3,
            normalize: true,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "score.lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.iou_floor > 0.0 && self.iou_floor <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "score.iou_floor must be in (0, 1], got {}",
                self.iou_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub cluster_id: u32,
    /// Relative density of each non-empty window, in window order.
    pub relative_densities: Vec<f64>,
    /// IoU between consecutive non-empty windows.
    pub ious: Vec<f64>,
    pub score_iou: f64,
    pub score_dens: f64,
    pub total: f64,
    pub active_window_count: usize,
}

/// `rho_local / rho_global` for one window of `cluster`.
pub fn relative_density(cluster: &Cluster, slice: &WindowSlice) -> Result<f64> {
    let local = slice.stats.as_ref().ok_or(Error::EmptyWindow)?;
    Ok(local.density / cluster.stats.density)
}

/// IoU of each consecutive pair of non-empty slices, in order.
pub fn iou_chain(slices: &[WindowSlice]) -> Result<Vec<f64>> {
    let active: Vec<_> = slices.iter().filter_map(|s| s.stats.as_ref()).collect();
    if active.len() < 2 {
        return Err(Error::InsufficientWindows);
    }
    active
        .windows(2)
        .map(|w| voxel_iou(&w[0].voxels, &w[1].voxels))
        .collect()
}

/// Overlap term: sum (or mean) of `ln(1 / max(iou, floor))`. Zero for an
/// empty chain.
pub fn iou_score(ious: &[f64], iou_floor: f64, normalize: bool) -> f64 {
    let sum: f64 = ious.iter().map(|&v| -v.max(iou_floor).ln()).sum();
    finish(sum, ious.len(), normalize)
}

/// Density term: sum (or mean) of `exp(R)`. Zero for no windows.
pub fn density_score(relative_densities: &[f64], normalize: bool) -> f64 {
    let sum: f64 = relative_densities.iter().map(|r| r.exp()).sum();
    finish(sum, relative_densities.len(), normalize)
}

fn finish(sum: f64, count: usize, normalize: bool) -> f64 {
    if normalize && count > 0 {
        sum / count as f64
    } else {
        sum
    }
}

pub fn score_cluster(
    cluster: &Cluster,
    slices: &[WindowSlice],
    cfg: &ScoringConfig,
) -> Result<ScoreBreakdown> {
    cfg.validate()?;
    let active: Vec<&WindowSlice> = slices.iter().filter(|s| !s.is_empty()).collect();
    let required = cfg.min_active_windows.max(1);
    if active.len() < required {
        return Err(Error::InsufficientSupport {
            active: active.len(),
            required,
        });
    }
    let relative_densities = active
        .iter()
        .map(|s| relative_density(cluster, s))
        .collect::<Result<Vec<f64>>>()?;
    let ious = if active.len() >= 2 {
        iou_chain(slices)?
    } else {
        Vec::new()
    };
    let score_iou = iou_score(&ious, cfg.iou_floor, cfg.normalize);
    let score_dens = density_score(&relative_densities, cfg.normalize);
    Ok(ScoreBreakdown {
        cluster_id: cluster.id,
        active_window_count: active.len(),
        relative_densities,
        ious,
        score_iou,
        score_dens,
        total: score_dens + cfg.lambda * score_iou,
    })
}

/// Highest `total`; ties go to higher `score_dens`, then lower id.
pub fn select_uav_cluster(breakdowns: &[ScoreBreakdown]) -> Result<u32> {
    breakdowns
        .iter()
        .max_by(|a, b| {
            a.total
                .total_cmp(&b.total)
                .then(a.score_dens.total_cmp(&b.score_dens))
                .then(b.cluster_id.cmp(&a.cluster_id))
        })
        .map(|b| b.cluster_id)
        .ok_or(Error::NoCandidate)
}

/// Orders breakdowns best first, using the same rule as
/// [`select_uav_cluster`].
pub fn rank(breakdowns: &mut [ScoreBreakdown]) {
    breakdowns.sort_by(|a, b| {
        b.total
            .total_cmp(&a.total)
            .then(b.score_dens.total_cmp(&a.score_dens))
            .then(a.cluster_id.cmp(&b.cluster_id))
            .then(Ordering::Equal)
    });
}
