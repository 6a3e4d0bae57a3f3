//! Position error against ground truth and detected-time ratio.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::dist2;
use crate::ingest::GroundTruth;
use crate::trajectory::TrajectorySample;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Mean squared Euclidean error over matched, detected samples (m²).
    pub mse: f64,
    /// Detected time over total time.
    pub sda: f64,
    pub matched_count: usize,
    pub detected_time: f64,
    pub undetected_time: f64,
}

/// Time each sample stands for: half the gap to each neighbour, with the
/// end samples mirrored so a uniform grid gives every sample the same
/// weight. A single sample gets weight 1.
pub fn sample_weights(ts: &[f64]) -> Vec<f64> {
    let n = ts.len();
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    ts[1] - ts[0]
                } else if i == n - 1 {
                    ts[n - 1] - ts[n - 2]
                } else {
                    0.5 * (ts[i + 1] - ts[i - 1])
                }
            })
            .collect(),
    }
}

fn is_uniform(w: &[f64]) -> bool {
    let (lo, hi) = w
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    hi - lo <= 1e-9 * hi.abs()
}

/// `(detected_time, total_time)` under [`sample_weights`].
pub fn detection_times(pred: &[TrajectorySample]) -> (f64, f64) {
    let ts: Vec<f64> = pred.iter().map(|s| s.t).collect();
    let w = sample_weights(&ts);
    let total: f64 = w.iter().sum();
    let detected: f64 = w
        .iter()
        .zip(pred)
        .filter(|(_, s)| s.detected)
        .map(|(w, _)| w)
        .sum();
    (detected, total)
}

/// Fraction of sequence time with a detection. On a uniform timestamp grid
/// this is exactly `detected samples / samples`.
pub fn sda(pred: &[TrajectorySample]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let ts: Vec<f64> = pred.iter().map(|s| s.t).collect();
    let w = sample_weights(&ts);
    if is_uniform(&w) {
        return pred.iter().filter(|s| s.detected).count() as f64 / pred.len() as f64;
    }
    let (detected, total) = detection_times(pred);
    if total > 0.0 {
        (detected / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Mean of `|pred - gt|²` over detected samples whose timestamp equals a
/// ground-truth timestamp. Returns the value and the matched count.
pub fn mse(pred: &[TrajectorySample], gt: &GroundTruth) -> Result<(f64, usize)> {
    let g = gt.samples();
    let (mut i, mut j) = (0, 0);
    let (mut sum, mut count) = (0.0, 0usize);
    while i < pred.len() && j < g.len() {
        let (a, b) = (pred[i].t, g[j].t);
        if a < b {
            i += 1;
        } else if b < a {
            j += 1;
        } else {
            if pred[i].detected {
                sum += dist2(pred[i].pos, g[j].pos);
                count += 1;
            }
            i += 1;
            j += 1;
        }
    }
    if count == 0 {
        return Err(Error::NothingToScore);
    }
    Ok((sum / count as f64, count))
}

pub fn evaluate(pred: &[TrajectorySample], gt: &GroundTruth) -> Result<EvalReport> {
    let (mse, matched_count) = mse(pred, gt)?;
    let (detected_time, total_time) = detection_times(pred);
    Ok(EvalReport {
        mse,
        sda: sda(pred),
        matched_count,
        detected_time,
        undetected_time: total_time - detected_time,
    })
}

impl EvalReport {
    pub fn table(&self) -> String {
        format!(
            "metric            value\n\
             mse (m^2)         {:.6}\n\
             sda               {:.4}\n\
             matched           {}\n\
             detected (s)      {:.3}\n\
             undetected (s)    {:.3}\n",
            self.mse, self.sda, self.matched_count, self.detected_time, self.undetected_time
        )
    }
}
