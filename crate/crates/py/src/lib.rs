//! Python bindings. Points cross the boundary as `(x, y, z)` tuples and
//! trajectories as `(t, x, y, z, detected)` tuples; reports come back as
//! JSON strings for `json.loads`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;

use skytrail_core::cluster::{dbscan_positions, DbscanParams};
use skytrail_core::geometry::voxelize_positions;
use skytrail_core::ingest::{
    load_sequence, save_ground_truth, save_sequence, Frame, GtSample, SequenceFormat,
};
use skytrail_core::synth::{self, SceneSpec, SyntheticScene};
use skytrail_core::{
    eval, trajectory, Error, GroundTruth, PipelineConfig, Sensor, SequenceCloud, TrajectorySample,
};

create_exception!(
    skytrail,
    NoCandidateError,
    PyException,
    "No cluster qualified as a trajectory."
);

fn to_py(e: Error) -> PyErr {
    match e.root() {
        Error::NoCandidate => NoCandidateError::new_err(e.to_string()),
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Point = (f64, f64, f64);
type Sample = (f64, f64, f64, f64, bool);

fn arr(p: Point) -> [f64; 3] {
    [p.0, p.1, p.2]
}

/// A timestamped LiDAR sequence.
#[pyclass(name = "Sequence", module = "skytrail", frozen)]
struct PySequence {
    inner: SequenceCloud,
}

#[pymethods]
impl PySequence {
    /// Loads a `.csv` or `.bin` sequence file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let fmt = SequenceFormat::from_path(&path);
        let (inner, _) = load_sequence(&path, fmt).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Builds a sequence from one timestamp per frame and
    /// `(frame, sensor, x, y, z)` point rows.
    #[staticmethod]
    #[pyo3(signature = (frame_times, rows))]
    fn from_rows(frame_times: Vec<f64>, rows: Vec<(u32, String, f64, f64, f64)>) -> PyResult<Self> {
        let mut frames: Vec<Frame> = frame_times
            .iter()
            .enumerate()
            .map(|(k, &t)| Frame::new(k as u32, t))
            .collect();
        for (k, sensor, x, y, z) in rows {
            let sensor: Sensor = sensor.parse().map_err(PyValueError::new_err)?;
            let f = frames
                .get_mut(k as usize)
                .ok_or_else(|| PyValueError::new_err(format!("frame {k} out of range")))?;
            f.push([x, y, z], sensor);
        }
        Ok(Self {
            inner: SequenceCloud::new(frames).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let fmt = SequenceFormat::from_path(&path);
        save_sequence(&self.inner, &path, fmt).map_err(to_py)
    }

    #[getter]
    fn frame_count(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn point_count(&self) -> usize {
        self.inner.point_count()
    }

    fn frame_times(&self) -> Vec<f64> {
        self.inner.frame_times()
    }

    /// All points as `(frame, t, sensor, x, y, z)`.
    fn rows(&self) -> Vec<(u32, f64, &'static str, f64, f64, f64)> {
        self.inner
            .frames()
            .iter()
            .flat_map(|f| &f.points)
            .map(|p| (p.frame_index, p.t, p.sensor.as_str(), p.x, p.y, p.z))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Sequence(frames={}, points={})",
            self.inner.n(),
            self.inner.point_count()
        )
    }
}

/// A generated scene with its ground truth.
#[pyclass(name = "Scene", module = "skytrail", frozen)]
struct PyScene {
    inner: SyntheticScene,
}

#[pymethods]
impl PyScene {
    #[getter]
    fn name(&self) -> &str {
        &self.inner.spec.name
    }

    #[getter]
    fn sequence(&self) -> PySequence {
        PySequence {
            inner: self.inner.sequence.clone(),
        }
    }

    /// Ground truth as `(t, x, y, z)`.
    fn ground_truth(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .gt
            .samples()
            .iter()
            .map(|s| (s.t, s.pos[0], s.pos[1], s.pos[2]))
            .collect()
    }

    /// Source label of every point, in sequence order.
    fn provenance(&self) -> Vec<String> {
        self.inner.provenance.iter().map(|p| p.label()).collect()
    }

    fn spec_json(&self) -> String {
        serde_json::to_string(&self.inner.spec).expect("spec serializes")
    }

    /// Writes `sequence.<ext>` and `gt.csv` into `dir`.
    #[pyo3(signature = (dir, binary = false))]
    fn save(&self, dir: PathBuf, binary: bool) -> PyResult<()> {
        std::fs::create_dir_all(&dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let (name, fmt) = if binary {
            ("sequence.bin", SequenceFormat::Bin)
        } else {
            ("sequence.csv", SequenceFormat::Csv)
        };
        save_sequence(&self.inner.sequence, &dir.join(name), fmt).map_err(to_py)?;
        save_ground_truth(&self.inner.gt, &dir.join("gt.csv")).map_err(to_py)
    }
}

/// Result of [`detect`].
#[pyclass(name = "Detection", module = "skytrail", frozen)]
struct PyDetection {
    #[pyo3(get)]
    trajectory: Vec<Sample>,
    #[pyo3(get)]
    selected_cluster: Option<u32>,
    #[pyo3(get)]
    sda: Option<f64>,
    report: String,
}

#[pymethods]
impl PyDetection {
    /// Full run report as JSON.
    fn report_json(&self) -> &str {
        &self.report
    }
}

fn config_from(config: Option<&str>, overrides: Vec<String>) -> PyResult<PipelineConfig> {
    let layer = match config {
        Some(text) => {
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        None => serde_json::json!({}),
    };
    PipelineConfig::default()
        .layered(layer, &overrides)
        .map_err(to_py)
}

/// IoU of the voxel sets occupied by two point lists.
#[pyfunction]
#[pyo3(signature = (a, b, resolution = 0.5))]
fn voxel_iou(a: Vec<Point>, b: Vec<Point>, resolution: f64) -> PyResult<f64> {
    let va = voxelize_positions(a.into_iter().map(arr), resolution).map_err(to_py)?;
    let vb = voxelize_positions(b.into_iter().map(arr), resolution).map_err(to_py)?;
    skytrail_core::voxel_iou(&va, &vb).map_err(to_py)
}

/// Cluster label per point, `None` for noise.
#[pyfunction]
#[pyo3(signature = (points, eps = 0.8, min_pts = 5))]
fn dbscan(
    py: Python<'_>,
    points: Vec<Point>,
    eps: f64,
    min_pts: usize,
) -> PyResult<Vec<Option<u32>>> {
    let pos: Vec<[f64; 3]> = points.into_iter().map(arr).collect();
    let params = DbscanParams { eps, min_pts };
    let l = py
        .detach(|| dbscan_positions(&pos, &params))
        .map_err(to_py)?;
    Ok(l.labels)
}

/// Uniform cubic B-spline basis weights at `u`.
#[pyfunction]
fn spline_basis(u: f64) -> [f64; 4] {
    trajectory::basis(u)
}

/// One B-spline segment evaluated at `u` in [0, 1].
#[pyfunction]
fn spline_eval(control: [Point; 4], u: f64) -> PyResult<Point> {
    let p = control.map(arr);
    let v = trajectory::spline_eval(&p, u).map_err(to_py)?;
    Ok((v[0], v[1], v[2]))
}

/// Names of the built-in scenes.
#[pyfunction]
fn standard_suite() -> Vec<String> {
    synth::standard_suite()
        .into_iter()
        .map(|s| s.name)
        .collect()
}

/// Generates a scene from a built-in name or a JSON spec.
#[pyfunction]
fn generate_scene(py: Python<'_>, spec: &str) -> PyResult<PyScene> {
    let spec = match synth::suite_scene(spec) {
        Some(s) => s,
        None => SceneSpec::from_json(spec).map_err(to_py)?,
    };
    let inner = py.detach(|| synth::generate(&spec)).map_err(to_py)?;
    Ok(PyScene { inner })
}

/// Runs the pipeline. `config` is a JSON document, `overrides` a list of
/// `section.key=value` strings; `timestamps` defaults to frame times.
#[pyfunction]
#[pyo3(signature = (sequence, config = None, overrides = Vec::new(), timestamps = None))]
fn detect(
    py: Python<'_>,
    sequence: &PySequence,
    config: Option<&str>,
    overrides: Vec<String>,
    timestamps: Option<Vec<f64>>,
) -> PyResult<PyDetection> {
    let cfg = config_from(config, overrides)?;
    let seq = &sequence.inner;
    let det = py
        .detach(|| skytrail_core::detect(seq, &cfg, timestamps.as_deref()))
        .map_err(to_py)?;
    Ok(PyDetection {
        trajectory: det
            .trajectory
            .samples
            .iter()
            .map(|s| (s.t, s.pos[0], s.pos[1], s.pos[2], s.detected))
            .collect(),
        selected_cluster: det.report.selected_cluster,
        sda: det.report.sda,
        report: serde_json::to_string(&det.report).expect("report serializes"),
    })
}

/// Cluster summaries and scores as JSON, without fitting a trajectory.
#[pyfunction]
#[pyo3(signature = (sequence, config = None, overrides = Vec::new()))]
fn inspect(
    py: Python<'_>,
    sequence: &PySequence,
    config: Option<&str>,
    overrides: Vec<String>,
) -> PyResult<String> {
    let cfg = config_from(config, overrides)?;
    let seq = &sequence.inner;
    let r = py
        .detach(|| skytrail_core::inspect(seq, &cfg, false))
        .map_err(to_py)?;
    Ok(serde_json::to_string(&r).expect("report serializes"))
}

/// `{mse, sda, matched_count, detected_time, undetected_time}` for a
/// predicted trajectory against `(t, x, y, z)` ground truth.
#[pyfunction]
fn evaluate(pred: Vec<Sample>, gt: Vec<(f64, f64, f64, f64)>) -> PyResult<String> {
    let pred: Vec<TrajectorySample> = pred
        .into_iter()
        .map(|(t, x, y, z, detected)| TrajectorySample {
            t,
            pos: [x, y, z],
            detected,
        })
        .collect();
    let gt = GroundTruth::new(
        gt.into_iter()
            .map(|(t, x, y, z)| GtSample { t, pos: [x, y, z] })
            .collect(),
    )
    .map_err(to_py)?;
    let r = eval::evaluate(&pred, &gt).map_err(to_py)?;
    Ok(serde_json::to_string(&r).expect("report serializes"))
}

#[pymodule]
fn skytrail(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NoCandidateError", m.py().get_type::<NoCandidateError>())?;
    m.add_class::<PySequence>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyDetection>()?;
    m.add_function(wrap_pyfunction!(voxel_iou, m)?)?;
    m.add_function(wrap_pyfunction!(dbscan, m)?)?;
    m.add_function(wrap_pyfunction!(spline_basis, m)?)?;
    m.add_function(wrap_pyfunction!(spline_eval, m)?)?;
    m.add_function(wrap_pyfunction!(standard_suite, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(inspect, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
