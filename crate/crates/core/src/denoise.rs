//! Density-based rejection of sparse sensor noise on the superimposed cloud.

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Sensor, TimedPoint};
use crate::grid::GridIndex;
use crate::ingest::SequenceCloud;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseParams {
    /// Neighborhood radius in meters.
    pub radius: f64,
    /// Other points required inside `radius` for a point to survive.
    pub min_neighbors: usize,
    /// Sensors whose points may be removed. Others always pass.
    #[serde(rename = "sensors")]
    pub apply_to: Vec<Sensor>,
}

impl Default for DenoiseParams {
    fn default() -> Self {
        Self {
            radius: 1.0,
            min_neighbors: 4,
            apply_to: vec![Sensor::Avia],
        }
    }
}

impl DenoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidParam(format!(
                "denoise.radius must be > 0, got {}",
                self.radius
            )));
        }
        if self.min_neighbors < 1 {
            return Err(Error::InvalidParam(
                "denoise.min_neighbors must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn applies(&self, s: Sensor) -> bool {
        self.apply_to.contains(&s)
    }
}

/// Every frame's points concatenated in frame order.
pub fn superimpose(seq: &SequenceCloud) -> Vec<TimedPoint> {
    let mut out = Vec::with_capacity(seq.point_count());
    for f in seq.frames() {
        out.extend_from_slice(&f.points);
    }
    out
}

/// Result of [`density_filter`]; both halves keep input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenoiseSplit {
    pub kept: Vec<TimedPoint>,
    pub removed: Vec<TimedPoint>,
}

/// Keep mask aligned with `points`: `true` for points that survive.
///
/// Neighbors are counted against the whole cloud, all sensors included, and
/// never include the point itself.
pub fn keep_mask(points: &[TimedPoint], params: &DenoiseParams) -> Result<Vec<bool>> {
    params.validate()?;
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let pos: Vec<[f64; 3]> = points.iter().map(TimedPoint::pos).collect();
    let grid = GridIndex::build(&pos, params.radius)?;
    let need = params.min_neighbors;
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            if !params.applies(p.sensor) {
                return true;
            }
            let mut others = 0;
            grid.visit_within(pos[i], |j| {
                if j != i {
                    others += 1;
                }
                if others >= need {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            });
            others >= need
        })
        .collect())
}

pub fn density_filter(points: &[TimedPoint], params: &DenoiseParams) -> Result<DenoiseSplit> {
    let mask = keep_mask(points, params)?;
    let mut split = DenoiseSplit::default();
    for (p, keep) in points.iter().zip(mask) {
        if keep {
            split.kept.push(*p);
        } else {
            split.removed.push(*p);
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Frame;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn p(x: f64, y: f64, z: f64, s: Sensor) -> TimedPoint {
        TimedPoint::new([x, y, z], 0.0, s, 0)
    }

    fn blob() -> Vec<TimedPoint> {
        (0..10)
            .map(|i| p(0.05 * i as f64, 0.0, 0.0, Sensor::Mid360))
            .collect()
    }

    #[test]
    fn superimpose_concatenates() {
        let mut frames = vec![Frame::new(0, 0.0), Frame::new(1, 0.1), Frame::new(2, 0.2)];
        for i in 0..2 {
            frames[0].push([i as f64, 0.0, 0.0], Sensor::Avia);
        }
        for i in 0..5 {
            frames[2].push([0.0, i as f64, 0.0], Sensor::Mid360);
        }
        let seq = SequenceCloud::new(frames).unwrap();
        let all = superimpose(&seq);
        assert_eq!(all.len(), 7);
        assert_eq!(all[0].x, 0.0);
        assert_eq!(all[1].x, 1.0);
        assert_eq!(all[2].frame_index, 2);
        assert_eq!(all[6].y, 4.0);

        let mut single = Frame::new(0, 0.0);
        single.push([1.0, 2.0, 3.0], Sensor::Avia);
        single.push([4.0, 5.0, 6.0], Sensor::Avia);
        let pts = single.points.clone();
        let seq = SequenceCloud::new(vec![single]).unwrap();
        assert_eq!(superimpose(&seq), pts);
    }

    #[test]
    fn isolated_avia_removed_mid360_kept() {
        let mut cloud = blob();
        cloud.push(p(100.0, 0.0, 0.0, Sensor::Avia));
        let split = density_filter(&cloud, &DenoiseParams::default()).unwrap();
        assert_eq!(split.removed.len(), 1);
        assert_eq!(split.removed[0].x, 100.0);

        let mut cloud = blob();
        cloud.push(p(100.0, 0.0, 0.0, Sensor::Mid360));
        let split = density_filter(&cloud, &DenoiseParams::default()).unwrap();
        assert!(split.removed.is_empty());
        assert_eq!(split.kept.len(), 11);
    }

    #[test]
    fn self_is_not_a_neighbor() {
        // Four coincident points: each has exactly three others.
        let cloud = vec![p(0.0, 0.0, 0.0, Sensor::Avia); 4];
        let params = DenoiseParams {
            min_neighbors: 3,
            ..Default::default()
        };
        assert_eq!(density_filter(&cloud, &params).unwrap().kept.len(), 4);
        let params = DenoiseParams {
            min_neighbors: 4,
            ..Default::default()
        };
        assert_eq!(density_filter(&cloud, &params).unwrap().removed.len(), 4);
    }

    #[test]
    fn empty_input() {
        let split = density_filter(&[], &DenoiseParams::default()).unwrap();
        assert!(split.kept.is_empty() && split.removed.is_empty());
    }

    #[test]
    fn invalid_params() {
        let bad = DenoiseParams {
            radius: 0.0,
            ..Default::default()
        };
        assert!(density_filter(&[], &bad).is_err());
        let bad = DenoiseParams {
            min_neighbors: 0,
            ..Default::default()
        };
        assert!(density_filter(&[], &bad).is_err());
    }

    fn brute_keep(points: &[TimedPoint], params: &DenoiseParams) -> Vec<bool> {
        let r2 = params.radius * params.radius;
        points
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if !params.apply_to.contains(&a.sensor) {
                    return true;
                }
                let n = points
                    .iter()
                    .enumerate()
                    .filter(|(j, b)| *j != i && a.dist2(b) <= r2)
                    .count();
                n >= params.min_neighbors
            })
            .collect()
    }

    fn random_cloud(rng: &mut impl Rng, n: usize, extent: f64) -> Vec<TimedPoint> {
        (0..n)
            .map(|_| {
                let s = if rng.random_bool(0.6) {
                    Sensor::Avia
                } else {
                    Sensor::Mid360
                };
                p(
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent..extent),
                    s,
                )
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_cloud() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(500);
        let cloud = random_cloud(&mut rng, 500, 4.0);
        let params = DenoiseParams::default();
        assert_eq!(
            keep_mask(&cloud, &params).unwrap(),
            brute_keep(&cloud, &params)
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn partition_and_monotonicity(seed in any::<u64>(), n in 0usize..300, k in 1usize..8) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cloud = random_cloud(&mut rng, n, 3.0);
            let lo = DenoiseParams { min_neighbors: k, ..Default::default() };
            let hi = DenoiseParams { min_neighbors: k + 1, ..Default::default() };
            let split = density_filter(&cloud, &lo).unwrap();
            prop_assert_eq!(split.kept.len() + split.removed.len(), cloud.len());
            // Pure function of input.
            prop_assert_eq!(&density_filter(&cloud, &lo).unwrap(), &split);
            let m_lo = keep_mask(&cloud, &lo).unwrap();
            let m_hi = keep_mask(&cloud, &hi).unwrap();
            for (a, b) in m_lo.iter().zip(&m_hi) {
                prop_assert!(!*b || *a);
            }
        }
    }
}
