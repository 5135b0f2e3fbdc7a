//! Python bindings: `PointCloud`, the distance metrics, shape sampling,
//! morphing and the invariant suites.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pcdist::io::{format_xyz, read_cloud, write_xyz};
use pcdist::morph::morph as run_morph;
use pcdist::verify::{self, Suite};
use pcdist::{
    evaluate, AswConfig, DistanceOrder, Error, LossKind, Metric, MetricParams, MorphConfig, SeededRng, ShapeKind,
};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn order(p: Option<f64>) -> PyResult<Option<DistanceOrder>> {
    p.map(DistanceOrder::new).transpose().map_err(to_py)
}

/// An immutable set of points in R^d.
#[pyclass(name = "PointCloud", module = "pcdist", frozen)]
struct PyPointCloud {
    inner: pcdist::PointCloud,
}

#[pymethods]
impl PyPointCloud {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = pcdist::PointCloud::from_rows(&rows).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Reads an XYZ or ASCII PLY file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: read_cloud(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        write_xyz(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        self.inner.to_rows()
    }

    fn to_xyz(&self) -> String {
        format_xyz(&self.inner)
    }

    fn translated(&self, offset: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.translated(&offset).map_err(to_py)?,
        })
    }

    fn scaled(&self, factor: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.scaled(factor).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("PointCloud(n={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

/// Distance between two clouds. Returns a dict with `value`, `p` and any
/// metric-specific fields (`n_used`, `converged`, `half_width`, `direction`).
#[pyfunction]
#[pyo3(signature = (metric, a, b, p=None, slices=100, seed=0, n0=2, s=1, eps=0.5, max_projections=500, restarts=16))]
#[allow(clippy::too_many_arguments)]
fn distance<'py>(
    py: Python<'py>,
    metric: &str,
    a: &PyPointCloud,
    b: &PyPointCloud,
    p: Option<f64>,
    slices: usize,
    seed: u64,
    n0: usize,
    s: usize,
    eps: f64,
    max_projections: usize,
    restarts: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let metric: Metric = parse(metric)?;
    let params = MetricParams {
        order: order(p)?,
        slices,
        asw: AswConfig::new(n0, s, eps, max_projections).map_err(to_py)?,
        restarts,
        rng: SeededRng::from_seed(seed),
        sinkhorn: None,
    };
    let (pa, pb) = (&a.inner, &b.inner);
    let r = py.detach(|| evaluate(metric, pa, pb, &params)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("metric", r.metric.name())?;
    out.set_item("value", r.value)?;
    out.set_item("p", r.p)?;
    if let Some(v) = r.n_slices {
        out.set_item("n_slices", v)?;
    }
    if let Some(v) = r.n_used {
        out.set_item("n_used", v)?;
    }
    if let Some(v) = r.converged {
        out.set_item("converged", v)?;
    }
    if let Some(v) = r.half_width {
        out.set_item("half_width", v)?;
    }
    if let Some(v) = r.direction {
        out.set_item("direction", v)?;
    }
    Ok(out)
}

#[pyfunction]
fn chamfer(a: &PyPointCloud, b: &PyPointCloud) -> PyResult<f64> {
    pcdist::chamfer(&a.inner, &b.inner).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, b, p=1.0))]
fn emd(a: &PyPointCloud, b: &PyPointCloud, p: f64) -> PyResult<f64> {
    let order = DistanceOrder::new(p).map_err(to_py)?;
    let (value, _) = pcdist::emd_exact(&a.inner, &b.inner, order).map_err(to_py)?;
    Ok(value)
}

/// Samples `n` points from `sphere`, `cube`, `torus` or `annulus`.
#[pyfunction]
#[pyo3(signature = (shape, n, seed=0, stream=0))]
fn sample_shape(shape: &str, n: usize, seed: u64, stream: u64) -> PyResult<PyPointCloud> {
    let kind: ShapeKind = parse(shape)?;
    let inner = pcdist::sample_shape(kind, n, &SeededRng::new(seed, stream)).map_err(to_py)?;
    Ok(PyPointCloud { inner })
}

/// Runs gradient descent from `source` towards `target`.
/// Returns `(rows, final_cloud, iterations_to_stop)` where each row is
/// `(iteration, loss, emd_or_None)`.
#[pyfunction]
#[pyo3(signature = (source, target, loss, step, iters=5000, slices=100, eval_every=10, emd_stop=MorphConfig::DEFAULT_EMD_STOP, p=2.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn morph(
    py: Python<'_>,
    source: &PyPointCloud,
    target: &PyPointCloud,
    loss: &str,
    step: f64,
    iters: usize,
    slices: usize,
    eval_every: usize,
    emd_stop: f64,
    p: f64,
    seed: u64,
) -> PyResult<(Vec<(usize, f64, Option<f64>)>, PyPointCloud, Option<usize>)> {
    let loss: LossKind = parse(loss)?;
    let mut cfg = MorphConfig::new(loss, step, iters).map_err(to_py)?;
    cfg.swd_slices = slices;
    cfg.eval_every = eval_every;
    cfg.emd_stop = emd_stop;
    cfg.order = DistanceOrder::new(p).map_err(to_py)?;
    cfg.rng = SeededRng::new(seed, 2);
    cfg.validate().map_err(to_py)?;
    let (s, t) = (&source.inner, &target.inner);
    let trace = py.detach(|| run_morph(s, t, &cfg)).map_err(to_py)?;
    let rows = trace.rows.iter().map(|r| (r.iteration, r.loss, r.emd)).collect();
    Ok((
        rows,
        PyPointCloud {
            inner: trace.final_cloud,
        },
        trace.iterations_to_stop,
    ))
}

/// Runs an invariant suite; returns one dict per suite.
#[pyfunction]
#[pyo3(signature = (suite, trials=1000, seed=0))]
fn run_suite<'py>(py: Python<'py>, suite: &str, trials: usize, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let suite: Suite = parse(suite)?;
    let reports = py
        .detach(|| verify::run(suite, trials, &SeededRng::from_seed(seed)))
        .map_err(to_py)?;
    reports
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("suite", r.suite.name())?;
            d.set_item("trials", r.trials)?;
            d.set_item("passes", r.passes)?;
            d.set_item("passed", r.passed())?;
            d.set_item("coverage", r.coverage)?;
            let failures: Vec<(usize, u64, u64, String)> = r
                .failures
                .iter()
                .map(|f| (f.trial, f.rng.seed, f.rng.stream_id, f.message.clone()))
                .collect();
            d.set_item("failures", failures)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "pcdist")]
fn pcdist_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPointCloud>()?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(emd, m)?)?;
    m.add_function(wrap_pyfunction!(sample_shape, m)?)?;
    m.add_function(wrap_pyfunction!(morph, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add("METRICS", Metric::ALL.iter().map(|m| m.name()).collect::<Vec<_>>())?;
    Ok(())
}
