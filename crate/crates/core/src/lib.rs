//! Unsupervised micro-UAV trajectory extraction from timestamped LiDAR
//! point-cloud sequences.
//!
//! The pipeline superimposes every frame into one cloud, drops sparse
//! returns, clusters with DBSCAN, scores each cluster by how its points
//! behave across sliding time windows (movers fill each window densely and
//! keep entering new voxels, static structure does neither), and fits a
//! cubic B-spline through the winning cluster.
//!
//! ```no_run
//! use skytrail_core::{config::PipelineConfig, pipeline::detect, synth};
//!
//! let scene = synth::generate(&synth::suite_scene("clean-hover").unwrap()).unwrap();
//! let det = detect(&scene.sequence, &PipelineConfig::default(), None).unwrap();
//! let report = skytrail_core::eval::evaluate(&det.trajectory.samples, &scene.gt).unwrap();
//! println!("{}", report.table());
//! ```

pub mod cluster;
pub mod config;
pub mod denoise;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod grid;
pub mod ingest;
pub mod pipeline;
pub mod score;
pub mod synth;
pub mod trajectory;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use geometry::{voxel_iou, Sensor, TimedPoint, VoxelSet};
pub use ingest::{GroundTruth, SequenceCloud};
pub use pipeline::{detect, inspect, Detection};
pub use trajectory::{Trajectory, TrajectorySample};
