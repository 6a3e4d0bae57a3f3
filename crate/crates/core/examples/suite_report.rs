//! Runs the detector over every standard synthetic scene and prints
//! recovery metrics.

use std::time::Instant;

use skytrail_core::geometry::dist2;
use skytrail_core::{detect, eval, synth, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = PipelineConfig::default();
    println!(
        "{:<14} {:>8} {:>9} {:>8} {:>7} {:>9} {:>8}",
        "scene", "points", "selected", "on-path", "sda", "mse", "secs"
    );
    for spec in synth::standard_suite() {
        let scene = synth::generate(&spec)?;
        let start = Instant::now();
        let det = detect(&scene.sequence, &cfg, None)?;
        let secs = start.elapsed().as_secs_f64();
        let gt = scene.gt.samples();
        let near = det
            .uav_points
            .iter()
            .filter(|p| dist2(p.pos(), gt[p.frame_index as usize].pos) <= 1.0)
            .count();
        let r = eval::evaluate(&det.trajectory.samples, &scene.gt)?;
        println!(
            "{:<14} {:>8} {:>9} {:>7.1}% {:>7.4} {:>9.4} {:>8.2}",
            spec.name,
            scene.sequence.point_count(),
            det.uav_points.len(),
            100.0 * near as f64 / det.uav_points.len() as f64,
            r.sda,
            r.mse,
            secs
        );
    }
    Ok(())
}
