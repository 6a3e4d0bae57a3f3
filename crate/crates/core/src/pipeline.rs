//! End-to-end detection: denoise, cluster, score, select, fit.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::{dbscan, extract_global_clusters, slice_windows, Cluster};
use crate::config::PipelineConfig;
use crate::denoise::{keep_mask, superimpose};
use crate::error::{Error, Result};
use crate::eval::sda;
use crate::geometry::{Aabb, TimedPoint};
use crate::ingest::SequenceCloud;
use crate::score::{rank, score_cluster, select_uav_cluster, ScoreBreakdown};
use crate::trajectory::{interpolate, prefilter, Trajectory, UavPointSet};

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            Error::NoCandidate | Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub denoise_ms: f64,
    pub cluster_ms: f64,
    pub score_ms: f64,
    pub trajectory_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub cluster_id: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectReport {
    pub config: PipelineConfig,
    pub frames: usize,
    pub input_points: usize,
    pub denoise_kept: usize,
    pub denoise_removed: usize,
    pub dbscan_noise: usize,
    pub cluster_count: usize,
    pub selected_cluster: Option<u32>,
    pub selected_points: usize,
    /// Detected fraction of the query timestamps.
    pub sda: Option<f64>,
    /// Scored clusters, best first.
    pub scores: Vec<ScoreBreakdown>,
    pub excluded: Vec<Exclusion>,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub trajectory: Trajectory,
    pub report: DetectReport,
    /// The selected cluster's points in time order, before prefiltering.
    pub uav_points: Vec<TimedPoint>,
}

/// Shared front half of `detect` and `inspect`.
struct Clustered {
    points: Vec<TimedPoint>,
    removed: usize,
    noise: usize,
    clusters: Vec<Cluster>,
    scored: Vec<ScoreBreakdown>,
    excluded: Vec<Exclusion>,
    timings: Timings,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn cluster_and_score(seq: &SequenceCloud, cfg: &PipelineConfig) -> Result<Clustered> {
    cfg.validate().stage("config")?;
    let mut timings = Timings::default();

    let t0 = Instant::now();
    let all = superimpose(seq);
    let keep = keep_mask(&all, &cfg.denoise).stage("denoise")?;
    let points: Vec<TimedPoint> = all
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(p, _)| *p)
        .collect();
    let removed = all.len() - points.len();
    timings.denoise_ms = ms(t0);

    let t1 = Instant::now();
    let res = cfg.cluster.voxel_resolution;
    let labeling = dbscan(&points, &cfg.cluster.dbscan()).stage("cluster")?;
    let noise = labeling.labels.iter().filter(|l| l.is_none()).count();
    let clusters = extract_global_clusters(&points, &labeling.labels, res).stage("cluster")?;
    timings.cluster_ms = ms(t1);

    let t2 = Instant::now();
    let outcomes: Vec<Result<ScoreBreakdown>> = clusters
        .par_iter()
        .map(|c| {
            let slices = slice_windows(c, &points, seq.n(), cfg.cluster.window_frames, res)?;
            score_cluster(c, &slices, &cfg.score)
        })
        .collect();
    let mut scored = Vec::new();
    let mut excluded = Vec::new();
    for (c, o) in clusters.iter().zip(outcomes) {
        match o {
            Ok(b) => scored.push(b),
            Err(e @ Error::InsufficientSupport { .. }) => excluded.push(Exclusion {
                cluster_id: c.id,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e).stage("score"),
        }
    }
    rank(&mut scored);
    timings.score_ms = ms(t2);

    Ok(Clustered {
        points,
        removed,
        noise,
        clusters,
        scored,
        excluded,
        timings,
    })
}

/// Runs the full pipeline and samples the trajectory at `query_ts`
/// (the frame timestamps when `None`).
pub fn detect(
    seq: &SequenceCloud,
    cfg: &PipelineConfig,
    query_ts: Option<&[f64]>,
) -> Result<Detection> {
    let start = Instant::now();
    let c = cluster_and_score(seq, cfg)?;
    let mut report = DetectReport {
        config: cfg.clone(),
        frames: seq.n(),
        input_points: seq.point_count(),
        denoise_kept: c.points.len(),
        denoise_removed: c.removed,
        dbscan_noise: c.noise,
        cluster_count: c.clusters.len(),
        selected_cluster: None,
        selected_points: 0,
        sda: None,
        scores: c.scored,
        excluded: c.excluded,
        timings: c.timings,
    };
    let id = select_uav_cluster(&report.scores)?;
    let cluster = c
        .clusters
        .iter()
        .find(|k| k.id == id)
        .expect("selected id comes from the cluster list");

    let t3 = Instant::now();
    let uav = UavPointSet::new(cluster.point_indices.iter().map(|&i| c.points[i]).collect());
    let control = prefilter(&uav, cfg.trajectory.median_window).stage("trajectory")?;
    let frame_ts;
    let qs = match query_ts {
        Some(q) => q,
        None => {
            frame_ts = seq.frame_times();
            &frame_ts
        }
    };
    let trajectory = interpolate(&control, qs).stage("trajectory")?;
    report.timings.trajectory_ms = ms(t3);
    report.timings.total_ms = ms(start);
    report.selected_cluster = Some(id);
    report.selected_points = uav.len();
    report.sda = Some(sda(&trajectory.samples));

    Ok(Detection {
        trajectory,
        report,
        uav_points: uav.into_points(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub id: u32,
    pub points: usize,
    pub voxels: usize,
    pub density: f64,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub first_frame: u32,
    pub last_frame: u32,
    pub score_dens: Option<f64>,
    pub score_iou: Option<f64>,
    pub total: Option<f64>,
    /// Why the cluster was not scored.
    pub excluded: Option<String>,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
    pub frame: u32,
    pub cluster: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectReport {
    pub config: PipelineConfig,
    pub frames: usize,
    pub input_points: usize,
    pub denoise_removed: usize,
    pub dbscan_noise: usize,
    pub selected_cluster: Option<u32>,
    pub clusters: Vec<ClusterSummary>,
    /// Denoised points with their cluster label; only filled on request.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<LabeledPoint>,
    pub timings: Timings,
}

/// Clusters and scores without fitting a trajectory. Never fails for lack
/// of a candidate.
pub fn inspect(
    seq: &SequenceCloud,
    cfg: &PipelineConfig,
    with_points: bool,
) -> Result<InspectReport> {
    let c = cluster_and_score(seq, cfg)?;
    let selected = select_uav_cluster(&c.scored).ok();
    let clusters = c
        .clusters
        .iter()
        .map(|k| {
            let pts = || k.point_indices.iter().map(|&i| &c.points[i]);
            let bbox =
                Aabb::from_positions(pts().map(TimedPoint::pos)).expect("clusters are non-empty");
            let score = c.scored.iter().find(|b| b.cluster_id == k.id);
            ClusterSummary {
                id: k.id,
                points: k.stats.num,
                voxels: k.stats.voxels.len(),
                density: k.stats.density,
                bbox_min: bbox.min,
                bbox_max: bbox.max,
                first_frame: pts().map(|p| p.frame_index).min().unwrap_or(0),
                last_frame: pts().map(|p| p.frame_index).max().unwrap_or(0),
                score_dens: score.map(|b| b.score_dens),
                score_iou: score.map(|b| b.score_iou),
                total: score.map(|b| b.total),
                excluded: c
                    .excluded
                    .iter()
                    .find(|e| e.cluster_id == k.id)
                    .map(|e| e.reason.clone()),
                selected: selected == Some(k.id),
            }
        })
        .collect();

    let points = if with_points {
        let mut label = vec![None; c.points.len()];
        for k in &c.clusters {
            for &i in &k.point_indices {
                label[i] = Some(k.id);
            }
        }
        c.points
            .iter()
            .zip(label)
            .map(|(p, cluster)| LabeledPoint {
                x: p.x,
                y: p.y,
                z: p.z,
                t: p.t,
                frame: p.frame_index,
                cluster,
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(InspectReport {
        config: cfg.clone(),
        frames: seq.n(),
        input_points: seq.point_count(),
        denoise_removed: c.removed,
        dbscan_noise: c.noise,
        selected_cluster: selected,
        clusters,
        points,
        timings: c.timings,
    })
}
