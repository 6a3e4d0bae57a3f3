//! Uniform cubic B-spline through the time-sorted UAV returns, evaluated at
//! query timestamps.
//!
//! Span `j` runs from control point `j` to `j + 1` in time and is drawn by
//! the segment `(P[j-1], P[j], P[j+1], P[j+2])` with `u` linear in time
//! across the span. Each end gets one phantom point reflected through the
//! boundary point (`P[-1] = 2 P[0] - P[1]`), which keeps the curve's linear
//! precision on the end spans and makes it pass through the end points.
//! Spans of zero duration (several returns in one frame) are skipped when
//! locating a query but still shape their neighbours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TimedPoint;

/// Time-sorted returns attributed to the target. Returns sharing a
/// timestamp stay adjacent, in their original order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UavPointSet {
    points: Vec<TimedPoint>,
}

impl UavPointSet {
    /// Stable sort by timestamp.
    pub fn new(mut points: Vec<TimedPoint>) -> Self {
        points.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self { points }
    }

    pub fn points(&self) -> &[TimedPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<TimedPoint> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub pos: [f64; 3],
    /// `false` when `t` lies outside the fitted time span and `pos` is the
    /// clamped boundary value.
    pub detected: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub control_points: Vec<TimedPoint>,
    pub samples: Vec<TrajectorySample>,
}

/// Uniform cubic B-spline basis weights at `u`.
#[inline]
pub fn basis(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    let v = 1.0 - u;
    [
        v * v * v / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

fn blend(p: &[[f64; 3]; 4], u: f64) -> [f64; 3] {
    let w = basis(u);
    let mut out = [0.0; 3];
    for (pi, wi) in p.iter().zip(w) {
        for k in 0..3 {
            out[k] += wi * pi[k];
        }
    }
    out
}

/// Evaluates one segment at `u` in `[0, 1]`.
pub fn spline_eval(p: &[[f64; 3]; 4], u: f64) -> Result<[f64; 3]> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::ParameterOutOfRange(u));
    }
    Ok(blend(p, u))
}

/// Sliding per-coordinate median of odd width `window`. Near the ends the
/// window shrinks symmetrically, so the first and last points pass through.
pub fn prefilter(points: &UavPointSet, window: usize) -> Result<UavPointSet> {
    if points.is_empty() {
        return Err(Error::NoTrajectoryPoints);
    }
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidParam(format!(
            "median window must be odd and >= 1, got {window}"
        )));
    }
    let src = points.points();
    let m = src.len();
    let half = window / 2;
    let mut buf = Vec::with_capacity(window);
    let out = (0..m)
        .map(|i| {
            let h = half.min(i).min(m - 1 - i);
            let mut p = src[i];
            let mut pos = [0.0; 3];
            for (k, c) in pos.iter_mut().enumerate() {
                buf.clear();
                buf.extend(src[i - h..=i + h].iter().map(|q| q.pos()[k]));
                let mid = buf.len() / 2;
                *c = *buf.select_nth_unstable_by(mid, f64::total_cmp).1;
            }
            p.x = pos[0];
            p.y = pos[1];
            p.z = pos[2];
            p
        })
        .collect();
    Ok(UavPointSet { points: out })
}

/// A fitted spline over timestamped control points.
#[derive(Debug, Clone)]
pub struct TimeSpline {
    times: Vec<f64>,
    points: Vec<[f64; 3]>,
}

impl TimeSpline {
    pub fn fit(control: &UavPointSet) -> Result<Self> {
        if control.len() < 4 {
            return Err(Error::InsufficientSplinePoints(control.len()));
        }
        Ok(Self {
            times: control.points().iter().map(|p| p.t).collect(),
            points: control.points().iter().map(TimedPoint::pos).collect(),
        })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    fn control(&self, i: isize) -> [f64; 3] {
        let m = self.points.len() as isize;
        let reflect =
            |a: [f64; 3], b: [f64; 3]| [2.0 * a[0] - b[0], 2.0 * a[1] - b[1], 2.0 * a[2] - b[2]];
        if i < 0 {
            reflect(self.points[0], self.points[1])
        } else if i >= m {
            reflect(self.points[(m - 1) as usize], self.points[(m - 2) as usize])
        } else {
            self.points[i as usize]
        }
    }

    /// The four control points drawing span `j`.
    pub fn segment(&self, j: usize) -> [[f64; 3]; 4] {
        let j = j as isize;
        [
            self.control(j - 1),
            self.control(j),
            self.control(j + 1),
            self.control(j + 2),
        ]
    }

    /// Span index and local parameter for a time inside `[start, end]`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let m = self.times.len();
        let last = m - 1;
        let j = self.times.partition_point(|&x| x <= t).saturating_sub(1);
        if j < last {
            let (a, b) = (self.times[j], self.times[j + 1]);
            return (j, ((t - a) / (b - a)).clamp(0.0, 1.0));
        }
        // t at (or past) the final timestamp: end of the last non-empty span.
        match (0..last).rev().find(|&k| self.times[k + 1] > self.times[k]) {
            Some(k) => (k, 1.0),
            None => (0, 0.0),
        }
    }

    /// Position at `t`, with `detected = false` when `t` falls outside the
    /// control points' time span (the boundary value is returned).
    pub fn eval_at(&self, t: f64) -> ([f64; 3], bool) {
        let covered = t >= self.start() && t <= self.end();
        let tc = t.clamp(self.start(), self.end());
        let (j, u) = self.locate(tc);
        (blend(&self.segment(j), u), covered)
    }
}

/// Fits the spline and samples it at strictly increasing `query_ts`.
pub fn interpolate(control: &UavPointSet, query_ts: &[f64]) -> Result<Trajectory> {
    let spline = TimeSpline::fit(control)?;
    if let Some(i) = query_ts
        .windows(2)
        .position(|w| w[1].is_nan() || w[1] <= w[0])
    {
        return Err(Error::UnsortedQueries(i + 1));
    }
    let samples = query_ts
        .iter()
        .map(|&t| {
            let (pos, detected) = spline.eval_at(t);
            TrajectorySample { t, pos, detected }
        })
        .collect();
    Ok(Trajectory {
        control_points: control.points().to_vec(),
        samples,
    })
}
