//! Seeded synthetic LiDAR scenes with known target trajectory.
//!
//! A scene is a set of fixed structures resampled every frame (so their
//! surfaces keep accumulating returns), uniform range noise, and one target
//! moving along a path at constant speed that is hit with probability `p`
//! per frame and returns 1..=k points when hit.
//!
//! All randomness comes from one ChaCha8 stream seeded with
//! `SceneSpec::seed` and consumed in a fixed order: per frame, structures in
//! declaration order, then noise, then target. The same spec therefore
//! produces the same scene bit for bit on every platform.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Sensor;
use crate::ingest::{Frame, GroundTruth, GtSample, SequenceCloud};

fn default_sigma() -> f64 {
    0.03
}
fn default_mid360() -> Sensor {
    Sensor::Mid360
}
fn default_avia() -> Sensor {
    Sensor::Avia
}
fn default_min_range() -> f64 {
    1.0
}
fn default_hits() -> [u32; 2] {
    [1, 5]
}
fn default_target_sigma() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    /// Seconds.
    pub duration: f64,
    /// Frames per second.
    pub frame_rate: f64,
    #[serde(default)]
    pub structures: Vec<Structure>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub target: Option<TargetSpec>,
}

/// A stationary object sampled `points_per_frame` times each frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Structure {
    /// Surface of an axis-aligned box.
    Box {
        center: [f64; 3],
        size: [f64; 3],
        points_per_frame: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_mid360")]
        sensor: Sensor,
    },
    /// Horizontal rectangle at `center[2]`.
    Plane {
        center: [f64; 3],
        size: [f64; 2],
        points_per_frame: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_mid360")]
        sensor: Sensor,
    },
    /// Solid ball, e.g. foliage.
    Blob {
        center: [f64; 3],
        radius: f64,
        points_per_frame: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_mid360")]
        sensor: Sensor,
    },
}

impl Structure {
    fn points_per_frame(&self) -> usize {
        match self {
            Structure::Box {
                points_per_frame, ..
            }
            | Structure::Plane {
                points_per_frame, ..
            }
            | Structure::Blob {
                points_per_frame, ..
            } => *points_per_frame,
        }
    }
}

/// Uniform-in-volume noise inside a spherical shell around `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub points_per_frame: usize,
    #[serde(default = "default_min_range")]
    pub min_range: f64,
    pub max_range: f64,
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default = "default_avia")]
    pub sensor: Sensor,
    #[serde(default)]
    pub streaks: Option<StreakSpec>,
}

/// Returns spread along one ray, `spacing` meters apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreakSpec {
    pub per_frame: usize,
    pub points: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PathSpec {
    /// Polyline traversed back and forth.
    Waypoints { points: Vec<[f64; 3]> },
    /// Horizontal circle, optionally climbing (helix).
    Circle {
        center: [f64; 3],
        radius: f64,
        #[serde(default)]
        phase: f64,
        /// Vertical speed in m/s.
        #[serde(default)]
        climb_rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub path: PathSpec,
    /// Ground speed along the path, m/s.
    pub speed: f64,
    pub hit_probability: f64,
    /// Inclusive range of returns on a hit frame.
    #[serde(default = "default_hits")]
    pub hits_per_frame: [u32; 2],
    /// Per-axis return scatter; offsets are truncated at 3 sigma.
    #[serde(default = "default_target_sigma")]
    pub sigma: f64,
    #[serde(default = "default_avia")]
    pub sensor: Sensor,
}

impl TargetSpec {
    /// Analytic position at time `t`.
    pub fn position(&self, t: f64) -> [f64; 3] {
        let s = self.speed * t;
        match &self.path {
            PathSpec::Circle {
                center,
                radius,
                phase,
                climb_rate,
            } => {
                let a = phase + s / radius;
                [
                    center[0] + radius * a.cos(),
                    center[1] + radius * a.sin(),
                    center[2] + climb_rate * t,
                ]
            }
            PathSpec::Waypoints { points } => {
                let lens: Vec<f64> = points.windows(2).map(|w| norm(sub(w[1], w[0]))).collect();
                let total: f64 = lens.iter().sum();
                let mut d = s.rem_euclid(2.0 * total);
                if d > total {
                    d = 2.0 * total - d;
                }
                for (i, &l) in lens.iter().enumerate() {
                    if d <= l || i == lens.len() - 1 {
                        let a = if l > 0.0 { (d / l).min(1.0) } else { 0.0 };
                        let (p, q) = (points[i], points[i + 1]);
                        return [
                            p[0] + a * (q[0] - p[0]),
                            p[1] + a * (q[1] - p[1]),
                            p[2] + a * (q[2] - p[2]),
                        ];
                    }
                    d -= l;
                }
                points[0]
            }
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn frame_count(&self) -> usize {
        ((self.duration * self.frame_rate).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(bad(format!("duration must be > 0, got {}", self.duration)));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(bad(format!(
                "frame_rate must be > 0, got {}",
                self.frame_rate
            )));
        }
        for (i, s) in self.structures.iter().enumerate() {
            let (sigma, ok) = match s {
                Structure::Box { size, sigma, .. } => {
                    (*sigma, size.iter().all(|v| *v >= 0.0 && v.is_finite()))
                }
                Structure::Plane { size, sigma, .. } => {
                    (*sigma, size.iter().all(|v| *v >= 0.0 && v.is_finite()))
                }
                Structure::Blob { radius, sigma, .. } => {
                    (*sigma, *radius > 0.0 && radius.is_finite())
                }
            };
            if !ok {
                return Err(bad(format!("structure {i}: bad size")));
            }
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(bad(format!("structure {i}: sigma must be >= 0")));
            }
        }
        if let Some(n) = &self.noise {
            if !(n.min_range >= 0.0 && n.max_range > n.min_range && n.max_range.is_finite()) {
                return Err(bad("noise: need 0 <= min_range < max_range"));
            }
            if let Some(st) = &n.streaks {
                if !(st.spacing > 0.0 && st.spacing.is_finite()) {
                    return Err(bad("noise.streaks.spacing must be > 0"));
                }
            }
        }
        if let Some(t) = &self.target {
            if !(0.0..=1.0).contains(&t.hit_probability) {
                return Err(bad(format!(
                    "target.hit_probability must be in [0, 1], got {}",
                    t.hit_probability
                )));
            }
            let [lo, hi] = t.hits_per_frame;
            if lo < 1 || hi < lo {
                return Err(bad("target.hits_per_frame must satisfy 1 <= min <= max"));
            }
            if !(t.speed >= 0.0 && t.speed.is_finite()) {
                return Err(bad("target.speed must be >= 0"));
            }
            if !(t.sigma >= 0.0 && t.sigma.is_finite()) {
                return Err(bad("target.sigma must be >= 0"));
            }
            match &t.path {
                PathSpec::Waypoints { points } => {
                    if points.len() < 2 {
                        return Err(bad("target.path needs at least 2 waypoints"));
                    }
                    let total: f64 = points.windows(2).map(|w| norm(sub(w[1], w[0]))).sum();
                    if total.is_nan() || total <= 0.0 {
                        return Err(bad("target.path has zero length"));
                    }
                }
                PathSpec::Circle { radius, .. } => {
                    if radius.is_nan() || *radius <= 0.0 {
                        return Err(bad("target.path.radius must be > 0"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Where a synthetic return came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Structure(u16),
    Noise,
    Target,
}

impl Provenance {
    pub fn label(&self) -> String {
        match self {
            Provenance::Structure(i) => format!("structure{i}"),
            Provenance::Noise => "noise".into(),
            Provenance::Target => "target".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub sequence: SequenceCloud,
    /// Target position at every frame timestamp (empty without a target).
    pub gt: GroundTruth,
    /// One label per point, in superimposed (frame, then in-frame) order.
    pub provenance: Vec<Provenance>,
}

impl SyntheticScene {
    pub fn count(&self, which: Provenance) -> usize {
        self.provenance.iter().filter(|p| **p == which).count()
    }

    pub fn target_count(&self) -> usize {
        self.count(Provenance::Target)
    }

    pub fn noise_count(&self) -> usize {
        self.count(Provenance::Noise)
    }

    pub fn structure_count(&self) -> usize {
        self.provenance
            .iter()
            .filter(|p| matches!(p, Provenance::Structure(_)))
            .count()
    }
}

fn gauss3(rng: &mut ChaCha8Rng, sigma: f64) -> [f64; 3] {
    if sigma == 0.0 {
        return [0.0; 3];
    }
    let mut g = || sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
    [g(), g(), g()]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = gauss3(rng, 1.0);
        let n = norm(v);
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn sample_structure(s: &Structure, rng: &mut ChaCha8Rng) -> ([f64; 3], Sensor) {
    match s {
        Structure::Box {
            center,
            size,
            sigma,
            sensor,
            ..
        } => {
            let [sx, sy, sz] = *size;
            // faces: +-x (sy*sz), +-y (sx*sz), +-z (sx*sy)
            let areas = [sy * sz, sx * sz, sx * sy];
            let total = 2.0 * (areas[0] + areas[1] + areas[2]);
            let mut pick = rng.random::<f64>() * total;
            let mut axis = 2;
            for (k, a) in areas.iter().enumerate() {
                if pick < 2.0 * a {
                    axis = k;
                    break;
                }
                pick -= 2.0 * a;
            }
            let mut p = [0.0; 3];
            for (k, c) in p.iter_mut().enumerate() {
                *c = (rng.random::<f64>() - 0.5) * size[k];
            }
            let side = if rng.random_bool(0.5) { 0.5 } else { -0.5 };
            p[axis] = side * size[axis];
            (add(add(*center, p), gauss3(rng, *sigma)), *sensor)
        }
        Structure::Plane {
            center,
            size,
            sigma,
            sensor,
            ..
        } => {
            let p = [
                center[0] + (rng.random::<f64>() - 0.5) * size[0],
                center[1] + (rng.random::<f64>() - 0.5) * size[1],
                center[2],
            ];
            (add(p, gauss3(rng, *sigma)), *sensor)
        }
        Structure::Blob {
            center,
            radius,
            sigma,
            sensor,
            ..
        } => loop {
            let v = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            if norm(v) <= 1.0 {
                let p = [
                    center[0] + radius * v[0],
                    center[1] + radius * v[1],
                    center[2] + radius * v[2],
                ];
                break (add(p, gauss3(rng, *sigma)), *sensor);
            }
        },
    }
}

fn noise_point(n: &NoiseSpec, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let (a, b) = (n.min_range.powi(3), n.max_range.powi(3));
    let r = (a + rng.random::<f64>() * (b - a)).cbrt();
    let d = unit_vector(rng);
    [
        n.origin[0] + r * d[0],
        n.origin[1] + r * d[1],
        n.origin[2] + r * d[2],
    ]
}

fn target_offset(sigma: f64, rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let o = gauss3(rng, sigma);
        if norm(o) <= 3.0 * sigma {
            return o;
        }
    }
}

/// Builds the scene described by `spec`.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.frame_count();
    let mut frames = Vec::with_capacity(n);
    let mut provenance = Vec::new();
    let mut gt = Vec::new();

    for k in 0..n {
        let t = k as f64 / spec.frame_rate;
        let mut frame = Frame::new(k as u32, t);

        for (si, s) in spec.structures.iter().enumerate() {
            for _ in 0..s.points_per_frame() {
                let (p, sensor) = sample_structure(s, &mut rng);
                frame.push(p, sensor);
                provenance.push(Provenance::Structure(si as u16));
            }
        }

        if let Some(noise) = &spec.noise {
            for _ in 0..noise.points_per_frame {
                frame.push(noise_point(noise, &mut rng), noise.sensor);
                provenance.push(Provenance::Noise);
            }
            if let Some(st) = &noise.streaks {
                for _ in 0..st.per_frame {
                    let d = unit_vector(&mut rng);
                    let r0 = rng.random_range(noise.min_range..noise.max_range);
                    for j in 0..st.points {
                        let r = r0 + j as f64 * st.spacing;
                        let p = [
                            noise.origin[0] + r * d[0],
                            noise.origin[1] + r * d[1],
                            noise.origin[2] + r * d[2],
                        ];
                        frame.push(p, noise.sensor);
                        provenance.push(Provenance::Noise);
                    }
                }
            }
        }

        if let Some(target) = &spec.target {
            let center = target.position(t);
            gt.push(GtSample { t, pos: center });
            if rng.random_bool(target.hit_probability) {
                let [lo, hi] = target.hits_per_frame;
                let hits = rng.random_range(lo..=hi);
                for _ in 0..hits {
                    let p = add(center, target_offset(target.sigma, &mut rng));
                    frame.push(p, target.sensor);
                    provenance.push(Provenance::Target);
                }
            }
        }

        frames.push(frame);
    }

    Ok(SyntheticScene {
        spec: spec.clone(),
        sequence: SequenceCloud::new(frames)?,
        gt: GroundTruth::new(gt)?,
        provenance,
    })
}

fn box_(center: [f64; 3], size: [f64; 3], ppf: usize) -> Structure {
    Structure::Box {
        center,
        size,
        points_per_frame: ppf,
        sigma: 0.03,
        sensor: Sensor::Mid360,
    }
}

fn ground(size: f64, ppf: usize) -> Structure {
    Structure::Plane {
        center: [0.0, 0.0, 0.25],
        size: [size, size],
        points_per_frame: ppf,
        sigma: 0.03,
        sensor: Sensor::Mid360,
    }
}

fn blob(center: [f64; 3], radius: f64, ppf: usize) -> Structure {
    Structure::Blob {
        center,
        radius,
        points_per_frame: ppf,
        sigma: 0.05,
        sensor: Sensor::Avia,
    }
}

fn avia_noise(ppf: usize) -> NoiseSpec {
    NoiseSpec {
        points_per_frame: ppf,
        min_range: 1.0,
        max_range: 400.0,
        origin: [0.0; 3],
        sensor: Sensor::Avia,
        streaks: None,
    }
}

/// The named reference scenes: 60 s at 10 Hz each.
pub fn standard_suite() -> Vec<SceneSpec> {
    vec![
        SceneSpec {
            name: "clean-hover".into(),
            seed: 101,
            duration: 60.0,
            frame_rate: 10.0,
            structures: vec![
                ground(60.0, 150),
                box_([15.0, 10.0, 6.0], [8.0, 8.0, 12.0], 60),
                box_([-20.0, -15.0, 5.0], [10.0, 6.0, 10.0], 50),
            ],
            noise: Some(avia_noise(40)),
            target: Some(TargetSpec {
                path: PathSpec::Circle {
                    center: [0.0, 0.0, 35.0],
                    radius: 20.0,
                    phase: 0.0,
                    climb_rate: 0.0,
                },
                speed: 2.0,
                hit_probability: 1.0,
                hits_per_frame: [1, 5],
                sigma: 0.05,
                sensor: Sensor::Avia,
            }),
        },
        SceneSpec {
            name: "urban-canyon".into(),
            seed: 202,
            duration: 60.0,
            frame_rate: 10.0,
            structures: vec![
                ground(80.0, 200),
                box_([-25.0, -25.0, 10.0], [12.0, 12.0, 20.0], 60),
                box_([25.0, -25.0, 8.0], [10.0, 14.0, 16.0], 60),
                box_([-25.0, 25.0, 12.0], [14.0, 10.0, 24.0], 60),
                box_([25.0, 25.0, 9.0], [12.0, 12.0, 18.0], 60),
                box_([0.0, -35.0, 6.0], [20.0, 6.0, 12.0], 40),
                box_([0.0, 35.0, 7.0], [20.0, 6.0, 14.0], 40),
                blob([-10.0, 0.0, 4.0], 2.5, 25),
                blob([10.0, 5.0, 4.0], 2.0, 20),
                blob([0.0, -12.0, 3.5], 2.0, 20),
            ],
            noise: Some(NoiseSpec {
                streaks: Some(StreakSpec {
                    per_frame: 5,
                    points: 8,
                    spacing: 6.0,
                }),
                ..avia_noise(300)
            }),
            target: Some(TargetSpec {
                path: PathSpec::Waypoints {
                    points: vec![[-20.0, -8.0, 16.0], [20.0, -8.0, 18.0], [20.0, 0.0, 20.0]],
                },
                speed: 0.8,
                hit_probability: 0.7,
                hits_per_frame: [1, 5],
                sigma: 0.05,
                sensor: Sensor::Avia,
            }),
        },
        SceneSpec {
            name: "fast-transit".into(),
            seed: 303,
            duration: 60.0,
            frame_rate: 10.0,
            structures: vec![
                ground(60.0, 150),
                box_([-12.0, 18.0, 7.0], [10.0, 10.0, 14.0], 60),
                box_([20.0, -10.0, 4.0], [6.0, 16.0, 8.0], 50),
            ],
            noise: Some(avia_noise(80)),
            target: Some(TargetSpec {
                path: PathSpec::Waypoints {
                    points: vec![[-170.0, -40.0, 40.0], [170.0, 40.0, 55.0]],
                },
                speed: 5.5,
                hit_probability: 1.0,
                hits_per_frame: [2, 5],
                sigma: 0.05,
                sensor: Sensor::Avia,
            }),
        },
        SceneSpec {
            name: "sparse-hits".into(),
            seed: 404,
            duration: 60.0,
            frame_rate: 10.0,
            structures: vec![
                ground(60.0, 150),
                box_([18.0, 0.0, 8.0], [8.0, 12.0, 16.0], 60),
                box_([-15.0, 20.0, 5.0], [12.0, 8.0, 10.0], 50),
                box_([-10.0, -22.0, 6.0], [8.0, 8.0, 12.0], 50),
                blob([5.0, 12.0, 4.0], 2.0, 20),
            ],
            noise: Some(avia_noise(100)),
            target: Some(TargetSpec {
                path: PathSpec::Circle {
                    center: [0.0, 0.0, 30.0],
                    radius: 8.0,
                    phase: 1.0,
                    climb_rate: 0.0,
                },
                speed: 0.4,
                hit_probability: 0.3,
                hits_per_frame: [1, 5],
                sigma: 0.05,
                sensor: Sensor::Avia,
            }),
        },
    ]
}

pub fn suite_scene(name: &str) -> Option<SceneSpec> {
    standard_suite().into_iter().find(|s| s.name == name)
}

/// A random scene with one mover and `structures` stationary objects,
/// derived entirely from `seed`.
pub fn random_mover_scene(seed: u64, structures: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let mut list = vec![ground(50.0, 120)];
    for i in 0..structures {
        let a = TAU * i as f64 / structures as f64 + rng.random_range(-0.3..0.3);
        let r = rng.random_range(12.0..25.0);
        let c = [r * a.cos(), r * a.sin()];
        if i % 3 == 2 {
            let rad = rng.random_range(1.5..3.0);
            list.push(blob([c[0], c[1], rad + 1.0], rad, rng.random_range(15..30)));
        } else {
            let size = [
                rng.random_range(5.0..12.0),
                rng.random_range(5.0..12.0),
                rng.random_range(6.0..20.0),
            ];
            list.push(box_(
                [c[0], c[1], size[2] / 2.0],
                size,
                rng.random_range(40..70),
            ));
        }
    }
    let alt = rng.random_range(28.0..45.0);
    let heading = rng.random_range(0.0..TAU);
    let half = rng.random_range(25.0..40.0);
    let (dx, dy) = (half * heading.cos(), half * heading.sin());
    SceneSpec {
        name: format!("random-mover-{seed}"),
        seed,
        duration: 30.0,
        frame_rate: 10.0,
        structures: list,
        noise: Some(avia_noise(60)),
        target: Some(TargetSpec {
            path: PathSpec::Waypoints {
                points: vec![[-dx, -dy, alt], [dx, dy, alt + rng.random_range(-5.0..5.0)]],
            },
            speed: rng.random_range(1.0..2.5),
            hit_probability: 0.85,
            hits_per_frame: [1, 5],
            sigma: 0.05,
            sensor: Sensor::Avia,
        }),
    }
}
