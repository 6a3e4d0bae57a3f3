//! Pipeline configuration: defaults, JSON file, `key=value` overrides.
//!
//! Later sources win: defaults, then the file, then overrides. Every key is
//! checked against the known set before deserializing, so a typo fails
//! loudly instead of silently falling back to a default.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cluster::DbscanParams;
use crate::denoise::DenoiseParams;
use crate::error::{Error, Result};
use crate::score::ScoringConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub eps: f64,
    pub min_pts: usize,
    /// Frames per sliding window.
    pub window_frames: usize,
    /// Voxel edge length in meters.
    pub voxel_resolution: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let d = DbscanParams::default();
        Self {
            eps: d.eps,
            min_pts: d.min_pts,
            window_frames: 20,
            voxel_resolution: 0.5,
        }
    }
}

impl ClusterConfig {
    pub fn dbscan(&self) -> DbscanParams {
        DbscanParams {
            eps: self.eps,
            min_pts: self.min_pts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dbscan().validate()?;
        if self.window_frames < 1 {
            return Err(Error::InvalidParam(
                "cluster.window_frames must be >= 1".into(),
            ));
        }
        if !(self.voxel_resolution.is_finite() && self.voxel_resolution > 0.0) {
            return Err(Error::InvalidParam(format!(
                "cluster.voxel_resolution must be > 0, got {}",
                self.voxel_resolution
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    /// Odd width of the median prefilter; 1 disables it.
    pub median_window: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { median_window: 5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub denoise: DenoiseParams,
    pub cluster: ClusterConfig,
    pub score: ScoringConfig,
    pub trajectory: TrajectoryConfig,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("denoise", &["radius", "min_neighbors", "sensors"]),
    (
        "cluster",
        &["eps", "min_pts", "window_frames", "voxel_resolution"],
    ),
    (
        "score",
        &["lambda", "iou_floor", "min_active_windows", "normalize"],
    ),
    ("trajectory", &["median_window"]),
];

fn check_keys(root: &Map<String, Value>) -> Result<()> {
    for (section, value) in root {
        let Some((_, keys)) = KNOWN.iter().find(|(s, _)| s == section) else {
            return Err(Error::UnknownConfigKey(section.clone()));
        };
        let Value::Object(inner) = value else {
            return Err(Error::Config(format!("`{section}` must be an object")));
        };
        if let Some(k) = inner.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(Error::UnknownConfigKey(format!("{section}.{k}")));
        }
    }
    Ok(())
}

fn merge(dst: &mut Value, src: Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                merge(d.entry(k).or_insert(Value::Null), v);
            }
        }
        (d, s) => *d = s,
    }
}

impl PipelineConfig {
    /// Parses a JSON document, filling missing keys with defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::default().layered(v, &[])
    }

    /// Applies `layer` and then `section.key=value` overrides on top of
    /// `self`. Values are read as JSON, falling back to a bare string
    /// (so `denoise.sensors=["avia"]` and `cluster.eps=1.2` both work).
    pub fn layered(&self, layer: Value, overrides: &[String]) -> Result<Self> {
        let Value::Object(file) = layer else {
            return Err(Error::Config("config root must be an object".into()));
        };
        check_keys(&file)?;
        let mut tree = serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut tree, Value::Object(file));

        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let (section, field) = key
                .split_once('.')
                .ok_or_else(|| Error::UnknownConfigKey(key.to_string()))?;
            let value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut one = Map::new();
            one.insert(
                section.to_string(),
                Value::Object(Map::from_iter([(field.to_string(), value)])),
            );
            check_keys(&one)?;
            merge(&mut tree, Value::Object(one));
        }

        let cfg: PipelineConfig =
            serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.denoise.validate()?;
        self.cluster.validate()?;
        self.score.validate()?;
        let w = self.trajectory.median_window;
        if w == 0 || w.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!(
                "trajectory.median_window must be odd and >= 1, got {w}"
            )));
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
