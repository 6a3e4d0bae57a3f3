//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints a PASS/FAIL line whether or not it fails.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

use skytrail_core::cluster::{dbscan_positions, DbscanParams};
use skytrail_core::denoise::{keep_mask, DenoiseParams};
use skytrail_core::eval::{self, sda};
use skytrail_core::geometry::{voxelize_positions, VoxelKey, VoxelSet};
use skytrail_core::grid::GridIndex;
use skytrail_core::score::{density_score, iou_score, select_uav_cluster, ScoreBreakdown};
use skytrail_core::synth::{self, SyntheticScene};
use skytrail_core::trajectory::{basis, interpolate, spline_eval, UavPointSet};
use skytrail_core::{
    detect, voxel_iou, Detection, PipelineConfig, Sensor, TimedPoint, TrajectorySample,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn d2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (x, y, z) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    x * x + y * y + z * z
}

// ---------------------------------------------------------------------------
// 1. DBSCAN against an O(N^2) oracle
// ---------------------------------------------------------------------------

struct OracleDbscan {
    core: Vec<bool>,
    /// Component id of each core point.
    comp: Vec<Option<usize>>,
    neighbors: Vec<Vec<usize>>,
}

fn oracle_dbscan(pts: &[[f64; 3]], eps: f64, min_pts: usize) -> OracleDbscan {
    let n = pts.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| d2(pts[i], pts[j]) <= eps * eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|v| v.len() >= min_pts).collect();
    let mut comp = vec![None; n];
    let mut next = 0;
    for s in 0..n {
        if !core[s] || comp[s].is_some() {
            continue;
        }
        comp[s] = Some(next);
        let mut q = VecDeque::from([s]);
        while let Some(i) = q.pop_front() {
            for &j in &neighbors[i] {
                if core[j] && comp[j].is_none() {
                    comp[j] = Some(next);
                    q.push_back(j);
                }
            }
        }
        next += 1;
    }
    OracleDbscan {
        core,
        comp,
        neighbors,
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let n = rng.random_range(1..=500);
    let centers: Vec<[f64; 3]> = (0..rng.random_range(1..8))
        .map(|_| std::array::from_fn(|_| rng.random_range(-10.0..10.0)))
        .collect();
    let spread = Normal::new(0.0, rng.random_range(0.2..1.5)).unwrap();
    (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                std::array::from_fn(|_| rng.random_range(-12.0..12.0))
            } else if rng.random_bool(0.1) {
                // lattice points exactly eps-spaced stress the boundary test
                std::array::from_fn(|_| rng.random_range(-6..6) as f64 * 0.5)
            } else {
                let c = centers[rng.random_range(0..centers.len())];
                std::array::from_fn(|k| c[k] + spread.sample(rng))
            }
        })
        .collect()
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut borders = 0;
    for inst in 0..50 {
        let pts = random_instance(&mut rng);
        let eps = [0.5, 0.8, 1.0, 1.3, 2.0][inst % 5];
        let min_pts = rng.random_range(1..12);
        let lib =
            dbscan_positions(&pts, &DbscanParams { eps, min_pts }).map_err(|e| e.to_string())?;
        let o = oracle_dbscan(&pts, eps, min_pts);

        ensure(lib.core == o.core, || {
            format!("instance {inst}: core flags differ")
        })?;
        // core partition equal up to relabeling: a bijection between ids
        let mut fwd: HashMap<u32, usize> = HashMap::new();
        let mut back: HashMap<usize, u32> = HashMap::new();
        for i in (0..pts.len()).filter(|&i| o.core[i]) {
            let (l, c) = (
                lib.labels[i].ok_or("core point unlabeled")?,
                o.comp[i].unwrap(),
            );
            ensure(
                *fwd.entry(l).or_insert(c) == c && *back.entry(c).or_insert(l) == l,
                || format!("instance {inst}: core partitions differ at point {i}"),
            )?;
        }
        for i in (0..pts.len()).filter(|&i| !o.core[i]) {
            let adjacent: HashSet<usize> =
                o.neighbors[i].iter().filter_map(|&j| o.comp[j]).collect();
            match lib.labels[i] {
                None => ensure(adjacent.is_empty(), || {
                    format!("instance {inst}: border {i} left as noise")
                })?,
                Some(l) => {
                    borders += 1;
                    ensure(fwd.get(&l).is_some_and(|c| adjacent.contains(c)), || {
                        format!("instance {inst}: border {i} joined a non-adjacent cluster")
                    })?
                }
            }
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(10), || format!("took {took:?}"))?;
    Ok(format!(
        "50 instances, {borders} border points, {:.2?}",
        took
    ))
}

// ---------------------------------------------------------------------------
// 2. Denoise neighbor counts against brute force
// ---------------------------------------------------------------------------

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    for cloud in 0..20 {
        let mut pts: Vec<TimedPoint> = random_instance(&mut rng)
            .into_iter()
            .cycle()
            .take(2000)
            .enumerate()
            .map(|(i, mut p)| {
                if i >= 500 {
                    p[2] += rng.random_range(-3.0..3.0);
                }
                let s = if rng.random_bool(0.7) {
                    Sensor::Avia
                } else {
                    Sensor::Mid360
                };
                TimedPoint::new(p, 0.0, s, 0)
            })
            .collect();
        pts.truncate(2000);
        let radius = [0.5, 1.0, 1.5, 0.25][cloud % 4];
        let min_neighbors = rng.random_range(1..8);
        let pos: Vec<[f64; 3]> = pts.iter().map(TimedPoint::pos).collect();
        let grid = GridIndex::build(&pos, radius).map_err(|e| e.to_string())?;
        let params = DenoiseParams {
            radius,
            min_neighbors,
            apply_to: vec![Sensor::Avia],
        };
        let mask = keep_mask(&pts, &params).map_err(|e| e.to_string())?;
        for i in 0..pts.len() {
            let brute = pos
                .iter()
                .filter(|q| d2(pos[i], **q) <= radius * radius)
                .count()
                - 1;
            let got = grid.count_within(pos[i], usize::MAX) - 1;
            ensure(got == brute, || {
                format!("cloud {cloud} point {i}: {got} vs {brute}")
            })?;
            let keep = pts[i].sensor == Sensor::Mid360 || brute >= min_neighbors;
            ensure(mask[i] == keep, || {
                format!("cloud {cloud} point {i}: keep flag differs")
            })?;
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(5), || format!("took {took:?}"))?;
    Ok(format!("20 clouds x 2000 points exact, {:.2?}", took))
}

// ---------------------------------------------------------------------------
// 3. Voxel IoU analytic cases
// ---------------------------------------------------------------------------

fn criterion_3() -> Check {
    let set =
        |cells: &[[i64; 3]]| VoxelSet::from_cells(1.0, cells.iter().map(|c| VoxelKey(*c))).unwrap();
    let a = set(&[[0, 0, 0], [1, 0, 0]]);
    let b = set(&[[1, 0, 0], [2, 0, 0]]);
    let c = set(&[[5, 5, 5]]);
    let iou = |x: &VoxelSet, y: &VoxelSet| voxel_iou(x, y).map_err(|e| e.to_string());
    ensure(iou(&a, &a)? == 1.0, || "identity != 1".into())?;
    ensure(iou(&a, &c)? == 0.0, || "disjoint != 0".into())?;
    ensure(iou(&a, &b)? == 1.0 / 3.0, || {
        "one shared cell != 1/3".into()
    })?;
    let p = voxelize_positions([[0.2, 0.2, 0.2], [1.7, 0.1, 0.9]], 1.0).unwrap();
    ensure(iou(&p, &a)? == 1.0, || "voxelized identity != 1".into())?;
    Ok("identity 1, disjoint 0, shared-cell 1/3".into())
}

// ---------------------------------------------------------------------------
// 4. Spline identities
// ---------------------------------------------------------------------------

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for u in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let s: f64 = basis(u).iter().sum();
        ensure((s - 1.0).abs() <= 1e-12, || {
            format!("basis sum at {u} is {s}")
        })?;
    }
    for _ in 0..100 {
        let p: [[f64; 3]; 4] =
            std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-100.0..100.0)));
        let s0 = spline_eval(&p, 0.0).unwrap();
        let s1 = spline_eval(&p, 1.0).unwrap();
        for k in 0..3 {
            let w0 = (p[0][k] + 4.0 * p[1][k] + p[2][k]) / 6.0;
            let w1 = (p[1][k] + 4.0 * p[2][k] + p[3][k]) / 6.0;
            ensure((s0[k] - w0).abs() <= 1e-12 * (1.0 + w0.abs()), || {
                format!("S(0) {s0:?}")
            })?;
            ensure((s1[k] - w1).abs() <= 1e-12 * (1.0 + w1.abs()), || {
                format!("S(1) {s1:?}")
            })?;
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let o: [f64; 3] = std::array::from_fn(|_| rng.random_range(-50.0..50.0));
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        let (t0, dt) = (rng.random_range(0.0..10.0), rng.random_range(0.05..1.0));
        let m = rng.random_range(4..40);
        let line = |t: f64| std::array::from_fn(|k| o[k] + v[k] * (t - t0));
        let pts: Vec<TimedPoint> = (0..m)
            .map(|i| {
                let t = t0 + i as f64 * dt;
                TimedPoint::new(line(t), t, Sensor::Avia, i as u32)
            })
            .collect();
        let qs: Vec<f64> = (0..(m - 1) * 7 + 1)
            .map(|i| t0 + i as f64 * dt / 7.0)
            .collect();
        let traj = interpolate(&UavPointSet::new(pts), &qs).map_err(|e| e.to_string())?;
        for s in &traj.samples {
            let want: [f64; 3] = line(s.t);
            worst = worst.max(d2(s.pos, want).sqrt());
        }
    }
    ensure(worst <= 1e-9, || {
        format!("linear precision error {worst:e} m")
    })?;
    Ok(format!(
        "unity, end values to 1e-12, linear precision {worst:.1e} m"
    ))
}

// ---------------------------------------------------------------------------
// 5. Scoring formulas
// ---------------------------------------------------------------------------

fn breakdown(id: u32, dens: f64, iou: f64, lambda: f64) -> ScoreBreakdown {
    ScoreBreakdown {
        cluster_id: id,
        relative_densities: vec![],
        ious: vec![],
        score_iou: iou,
        score_dens: dens,
        total: dens + lambda * iou,
        active_window_count: 3,
    }
}

fn criterion_5() -> Check {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let ln2 = 2f64.ln();
    ensure(
        close(iou_score(&[0.5, 0.5], 1e-3, false), 2.0 * ln2),
        || "2 ln 2".into(),
    )?;
    ensure(close(iou_score(&[0.5, 0.5], 1e-3, true), ln2), || {
        "ln 2".into()
    })?;
    let dens = density_score(&[1.0; 5], true);
    ensure(close(dens, std::f64::consts::E), || "e".into())?;
    for lambda in [0.0, 0.5, 1.0, 3.0] {
        let b = breakdown(0, dens, ln2, lambda);
        ensure(close(b.total, std::f64::consts::E + lambda * ln2), || {
            "lambda combination".into()
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..1000 {
        // argmax invariance under positive scaling of every total
        let n = rng.random_range(1..10);
        let bs: Vec<ScoreBreakdown> = (0..n)
            .map(|i| {
                breakdown(
                    i,
                    rng.random_range(1.0..3.0),
                    rng.random_range(0.0..7.0),
                    1.0,
                )
            })
            .collect();
        let c = rng.random_range(0.01..100.0);
        let scaled: Vec<ScoreBreakdown> = bs
            .iter()
            .map(|b| ScoreBreakdown {
                total: b.total * c,
                ..b.clone()
            })
            .collect();
        ensure(
            select_uav_cluster(&bs).unwrap() == select_uav_cluster(&scaled).unwrap(),
            || format!("trial {trial}: argmax changed under scaling by {c}"),
        )?;

        // monotonicity under single-term perturbations
        let normalize = rng.random_bool(0.5);
        let floor = 10f64.powf(-rng.random_range(1.0..6.0));
        let mut ious: Vec<f64> = (0..rng.random_range(1..30))
            .map(|_| rng.random::<f64>())
            .collect();
        let before = iou_score(&ious, floor, normalize);
        let k = rng.random_range(0..ious.len());
        ious[k] *= rng.random::<f64>();
        ensure(iou_score(&ious, floor, normalize) >= before, || {
            format!("trial {trial}: iou monotonicity")
        })?;

        let mut rs: Vec<f64> = (0..rng.random_range(1..30))
            .map(|_| rng.random_range(0.0..3.0))
            .collect();
        let before = density_score(&rs, normalize);
        let k = rng.random_range(0..rs.len());
        rs[k] += rng.random_range(0.0..1.0);
        ensure(density_score(&rs, normalize) >= before, || {
            format!("trial {trial}: density monotonicity")
        })?;
    }
    Ok("hand values to 1e-12, 1000 scaling/monotonicity trials".into())
}

// ---------------------------------------------------------------------------
// 6. Synthetic recovery on the standard suite
// ---------------------------------------------------------------------------

/// Fraction of the selected points within 1 m of the truth at their frame.
fn on_path(det: &Detection, scene: &SyntheticScene) -> f64 {
    let gt = scene.gt.samples();
    let near = det
        .uav_points
        .iter()
        .filter(|p| d2(p.pos(), gt[p.frame_index as usize].pos) <= 1.0)
        .count();
    near as f64 / det.uav_points.len().max(1) as f64
}

fn criterion_6() -> Check {
    let cfg = PipelineConfig::default();
    let mut total_points = 0;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for spec in synth::standard_suite() {
        let scene = synth::generate(&spec).map_err(|e| e.to_string())?;
        total_points += scene.sequence.point_count();
        let start = Instant::now();
        let det = detect(&scene.sequence, &cfg, None).map_err(|e| format!("{}: {e}", spec.name))?;
        let secs = start.elapsed().as_secs_f64();
        let r = eval::evaluate(&det.trajectory.samples, &scene.gt).map_err(|e| e.to_string())?;
        let frac = on_path(&det, &scene);
        let (min_sda, max_mse) = match spec.name.as_str() {
            "clean-hover" | "fast-transit" => (0.95, 0.5),
            _ => (0.85, 1.5),
        };
        let ok = frac >= 0.9 && r.sda >= min_sda && r.mse <= max_mse && secs < 30.0;
        lines.push(format!(
            "{} on-path {:.1}% sda {:.4} mse {:.4} {:.1}s",
            spec.name,
            100.0 * frac,
            r.sda,
            r.mse,
            secs
        ));
        if !ok {
            failures.push(spec.name.clone());
        }
    }
    let summary = format!("{total_points} points; {}", lines.join("; "));
    ensure(total_points >= 200_000, || {
        format!("only {total_points} points")
    })?;
    ensure(failures.is_empty(), || {
        format!("{} failed: {summary}", failures.join(","))
    })?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// 7. Mover vs stationary structures
// ---------------------------------------------------------------------------

fn criterion_7() -> Check {
    let cfg = PipelineConfig::default();
    let mut hits = 0;
    let mut missed = Vec::new();
    for seed in 0..20u64 {
        let spec = synth::random_mover_scene(seed, 3 + (seed % 3) as usize);
        let scene = synth::generate(&spec).map_err(|e| e.to_string())?;
        match detect(&scene.sequence, &cfg, None) {
            Ok(det) if on_path(&det, &scene) >= 0.9 => hits += 1,
            _ => missed.push(seed),
        }
    }
    ensure(hits >= 19, || format!("{hits}/20, missed seeds {missed:?}"))?;
    Ok(format!("mover selected in {hits}/20 scenes"))
}

// ---------------------------------------------------------------------------
// 8. Determinism across thread counts
// ---------------------------------------------------------------------------

fn skytrail(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_skytrail"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        String::from_utf8_lossy(&out.stderr).into_owned()
    })
}

/// The report minus wall-clock timings.
fn stable_report(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    v.as_object_mut()
        .ok_or("report is not an object")?
        .remove("timings");
    Ok(v)
}

fn criterion_8() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let mut scenes = 0;
    for spec in synth::standard_suite() {
        let name = spec.name.as_str();
        let scene_dir = root.join(name);
        skytrail(
            root,
            &["synth", "--scene", name, "--out", name, "--format", "bin"],
        )?;
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let run = scene_dir.join(format!("run{threads}"));
            fs::create_dir_all(&run).map_err(|e| e.to_string())?;
            skytrail(
                &run,
                &[
                    "--threads",
                    threads,
                    "detect",
                    "--input",
                    "../sequence.bin",
                    "--timestamps",
                    "../gt.csv",
                    "--out",
                    "traj.csv",
                    "--report",
                    "report.json",
                ],
            )?;
            let traj = fs::read(run.join("traj.csv")).map_err(|e| e.to_string())?;
            outputs.push((traj, stable_report(&run.join("report.json"))?));
        }
        ensure(outputs[0].0 == outputs[1].0, || {
            format!("{name}: trajectory bytes differ")
        })?;
        ensure(outputs[0].1 == outputs[1].1, || {
            format!("{name}: reports differ")
        })?;
        scenes += 1;
    }
    Ok(format!(
        "{scenes} scenes byte-identical at 1 and 4 threads (timings excluded)"
    ))
}

// ---------------------------------------------------------------------------
// 9. SDA
// ---------------------------------------------------------------------------

fn criterion_9() -> Check {
    let samples: Vec<TrajectorySample> = (0..1000)
        .map(|i| TrajectorySample {
            t: i as f64 / 10.0,
            pos: [0.0; 3],
            detected: i >= 7,
        })
        .collect();
    let v = sda(&samples);
    ensure(v == 0.993, || format!("got {v}"))?;
    Ok("993/1000 -> 0.993 exactly".into())
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Check);
    let criteria: [Criterion; 9] = [
        ("dbscan matches brute-force oracle", criterion_1),
        ("denoise counts match brute force", criterion_2),
        ("voxel IoU analytic cases", criterion_3),
        ("spline identities", criterion_4),
        ("scoring formulas and properties", criterion_5),
        ("synthetic suite recovery", criterion_6),
        ("mover beats stationary structures", criterion_7),
        ("determinism across thread counts", criterion_8),
        ("SDA uniform-timestamp case", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
