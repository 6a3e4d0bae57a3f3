use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use skytrail_core::cluster::{extract_global_clusters, slice_windows};
use skytrail_core::score::{
    density_score, iou_chain, iou_score, relative_density, score_cluster, ScoringConfig,
};
use skytrail_core::{voxel_iou, Sensor, TimedPoint};

fn cell(p: &TimedPoint, res: f64) -> (i64, i64, i64) {
    (
        (p.x / res).floor() as i64,
        (p.y / res).floor() as i64,
        (p.z / res).floor() as i64,
    )
}

/// count / (distinct cells * res^3), computed without the library.
fn density_oracle(pts: &[&TimedPoint], res: f64) -> f64 {
    let cells: HashSet<_> = pts.iter().map(|p| cell(p, res)).collect();
    pts.len() as f64 / (cells.len() as f64 * res.powi(3))
}

fn jaccard(a: &[&TimedPoint], b: &[&TimedPoint], res: f64) -> f64 {
    let a: HashSet<_> = a.iter().map(|p| cell(p, res)).collect();
    let b: HashSet<_> = b.iter().map(|p| cell(p, res)).collect();
    a.intersection(&b).count() as f64 / a.union(&b).count() as f64
}

fn random_cluster(rng: &mut ChaCha8Rng, frames: u32) -> Vec<TimedPoint> {
    let n = rng.random_range(20..400);
    (0..n)
        .map(|_| {
            let f = rng.random_range(0..frames);
            let p = [
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.0..1.0),
            ];
            TimedPoint::new(p, f as f64 * 0.1, Sensor::Avia, f)
        })
        .collect()
}

#[test]
fn relative_density_and_chain_match_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let frames = rng.random_range(5..60u32);
        let pts = random_cluster(&mut rng, frames);
        let res = [0.25, 0.5, 1.0][rng.random_range(0..3)];
        let len = rng.random_range(1..=frames as usize);
        let labels = vec![Some(0); pts.len()];
        let c = extract_global_clusters(&pts, &labels, res)
            .unwrap()
            .remove(0);
        let slices = slice_windows(&c, &pts, frames as usize, len, res).unwrap();
        let all: Vec<&TimedPoint> = pts.iter().collect();
        let global = density_oracle(&all, res);

        let mut active = Vec::new();
        for (start, s) in slices.iter().enumerate() {
            let members: Vec<&TimedPoint> = pts
                .iter()
                .filter(|p| (start..start + len).contains(&(p.frame_index as usize)))
                .collect();
            if members.is_empty() {
                assert!(s.is_empty());
                continue;
            }
            let r = relative_density(&c, s).unwrap();
            let want = density_oracle(&members, res) / global;
            assert!((r - want).abs() <= 1e-12 * want, "{r} vs {want}");
            active.push(members);
        }
        if active.len() >= 2 {
            let chain = iou_chain(&slices).unwrap();
            assert_eq!(chain.len(), active.len() - 1);
            for (i, v) in chain.iter().enumerate() {
                let want = jaccard(&active[i], &active[i + 1], res);
                assert!((v - want).abs() < 1e-15);
                let direct = voxel_iou(
                    slices
                        .iter()
                        .filter_map(|s| s.stats.as_ref())
                        .nth(i)
                        .map(|s| &s.voxels)
                        .unwrap(),
                    slices
                        .iter()
                        .filter_map(|s| s.stats.as_ref())
                        .nth(i + 1)
                        .map(|s| &s.voxels)
                        .unwrap(),
                )
                .unwrap();
                assert_eq!(*v, direct);
            }
        }
    }
}

#[test]
fn lambda_combination_hand_value() {
    let dens = density_score(&[1.0; 5], true);
    let iou = iou_score(&[0.5, 0.5], 1e-3, true);
    let total = dens + 1.0 * iou;
    let want = std::f64::consts::E + 2f64.ln();
    assert!((total - want).abs() < 1e-12);
    assert!((total - 3.41143).abs() < 1e-5);
}

#[test]
fn totals_finite_for_extreme_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let ious: Vec<f64> = (0..rng.random_range(0..30))
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let floor = 10f64.powf(-rng.random_range(0.0..300.0));
        assert!(iou_score(&ious, floor, rng.random_bool(0.5)).is_finite());
    }
}

/// Mean R of a cluster built from `pts` spanning `frames` frames.
fn mean_r(pts: &[TimedPoint], frames: usize) -> f64 {
    let labels = vec![Some(0); pts.len()];
    let c = extract_global_clusters(pts, &labels, 0.5)
        .unwrap()
        .remove(0);
    let slices = slice_windows(&c, pts, frames, 20, 0.5).unwrap();
    let cfg = ScoringConfig::default();
    let b = score_cluster(&c, &slices, &cfg).unwrap();
    b.relative_densities.iter().sum::<f64>() / b.relative_densities.len() as f64
}

#[test]
fn stationary_mean_r_below_mover_in_paired_trials() {
    let frames = 300;
    let seeds = 30;
    let mut wins = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let jitter = Normal::new(0.0, 0.05).unwrap();
        let mut fixed = Vec::new();
        let mut mover = Vec::new();
        let v = [rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0), 0.0];
        for f in 0..frames as u32 {
            let t = f as f64 * 0.1;
            // same number of returns per frame for both objects
            for _ in 0..3 {
                let s = [
                    rng.random_range(0.0..2.0),
                    rng.random_range(0.0..2.0),
                    rng.random_range(0.0..2.0),
                ];
                fixed.push(TimedPoint::new(s, t, Sensor::Mid360, f));
                let m = [
                    v[0] * t + jitter.sample(&mut rng),
                    v[1] * t + jitter.sample(&mut rng),
                    30.0 + jitter.sample(&mut rng),
                ];
                mover.push(TimedPoint::new(m, t, Sensor::Avia, f));
            }
        }
        if mean_r(&fixed, frames) < mean_r(&mover, frames) {
            wins += 1;
        }
    }
    assert!(wins as f64 >= 0.95 * seeds as f64, "{wins}/{seeds}");
}
