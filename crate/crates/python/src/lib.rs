//! Python bindings: operators, the trace estimators and the experiment harness.

use std::path::PathBuf;

use adatrace_core::estimators::{self, AdaptiveConfig, SinglePassSplit};
use adatrace_core::harness::{self, ExperimentSpec, Fixture, FixtureSpec};
use adatrace_core::linop::{DenseOperator, SparseOperator, SymmetricOperator};
use adatrace_core::rangefinder::BlockSchedule;
use adatrace_core::sketch::ProbeKind;
use adatrace_core::{io, special, TraceError};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: TraceError) -> PyErr {
    match e {
        TraceError::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn probe_kind(rademacher: bool) -> ProbeKind {
    if rademacher {
        ProbeKind::Rademacher
    } else {
        ProbeKind::Gaussian
    }
}

fn schedule(name: &str) -> PyResult<BlockSchedule> {
    match name {
        "coarse" => Ok(BlockSchedule::Coarse),
        "batched" => Ok(BlockSchedule::Batched),
        other => Err(PyValueError::new_err(format!(
            "unknown schedule '{other}' (coarse or batched)"
        ))),
    }
}

/// A symmetric operator accessed through matrix-vector products.
#[pyclass(name = "Operator", module = "adatrace")]
struct PyOperator {
    inner: Fixture,
}

#[pymethods]
impl PyOperator {
    /// Operator from a dense symmetric matrix given as a list of rows.
    #[staticmethod]
    fn dense(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("matrix must be square"));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let op = DenseOperator::new(m).map_err(to_py)?;
        let truth = op.trace();
        Ok(Self {
            inner: Fixture {
                id: format!("dense:n={n}"),
                op: Box::new(op),
                truth: Some(truth),
                psd: false,
            },
        })
    }

    /// Operator from a symmetric Matrix Market file.
    #[staticmethod]
    fn matrix_market(path: PathBuf) -> PyResult<Self> {
        let m = io::read_matrix_market(&path).map_err(to_py)?;
        let truth = m.diagonal().iter().sum();
        let op = SparseOperator::new(m).map_err(to_py)?;
        Ok(Self {
            inner: Fixture {
                id: format!("matrix_file:path={}", path.display()),
                op: Box::new(op),
                truth: Some(truth),
                psd: false,
            },
        })
    }

    /// Named fixture, e.g. `"synthetic_algebraic:c=1,n=1000"`.
    #[staticmethod]
    fn fixture(py: Python<'_>, spec: &str) -> PyResult<Self> {
        let spec: FixtureSpec = spec.parse().map_err(to_py)?;
        let inner = py.detach(|| harness::generate_fixture(&spec)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.op.dim()
    }

    /// Reference trace, when known.
    #[getter]
    fn truth(&self) -> Option<f64> {
        self.inner.truth
    }

    #[getter]
    fn matvecs(&self) -> u64 {
        self.inner.op.matvecs()
    }

    /// `A x` for a single vector (charged as one matvec).
    fn matvec(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let v = nalgebra::DVector::from_vec(x);
        let y = self.inner.op.apply_vector(&v).map_err(to_py)?;
        Ok(y.as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Operator('{}', n={})", self.inner.id, self.inner.op.dim())
    }
}

#[pyclass(name = "TraceReport", module = "adatrace", get_all, frozen)]
struct PyTraceReport {
    estimate: f64,
    matvecs_total: u64,
    matvecs_lowrank: u64,
    matvecs_hutchinson: u64,
    rank_used: usize,
    frob_overestimate: Option<f64>,
    base_matvecs: u64,
    seed: u64,
    samples: usize,
    wasted_matvecs: u64,
}

impl From<estimators::TraceReport> for PyTraceReport {
    fn from(r: estimators::TraceReport) -> Self {
        Self {
            estimate: r.estimate,
            matvecs_total: r.matvecs_total,
            matvecs_lowrank: r.matvecs_lowrank,
            matvecs_hutchinson: r.matvecs_hutchinson,
            rank_used: r.rank_used,
            frob_overestimate: r.frob_overestimate,
            base_matvecs: r.base_matvecs,
            seed: r.seed,
            samples: r.samples,
            wasted_matvecs: r.wasted_matvecs,
        }
    }
}

#[pymethods]
impl PyTraceReport {
    fn __repr__(&self) -> String {
        format!(
            "TraceReport(estimate={:e}, matvecs_total={}, rank_used={})",
            self.estimate, self.matvecs_total, self.rank_used
        )
    }
}

type Report = PyResult<PyTraceReport>;

fn run<F>(py: Python<'_>, f: F) -> Report
where
    F: FnOnce() -> adatrace_core::Result<estimators::TraceReport> + Send,
{
    py.detach(f).map(Into::into).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (op, m, seed=0, rademacher=false))]
fn hutchinson(py: Python<'_>, op: &PyOperator, m: usize, seed: u64, rademacher: bool) -> Report {
    run(py, || {
        estimators::hutchinson(op.inner.op.as_ref(), m, probe_kind(rademacher), seed)
    })
}

#[pyfunction]
#[pyo3(signature = (op, m, seed=0, rademacher=false))]
fn hutch_pp(py: Python<'_>, op: &PyOperator, m: usize, seed: u64, rademacher: bool) -> Report {
    run(py, || {
        estimators::hutch_pp(op.inner.op.as_ref(), m, probe_kind(rademacher), seed)
    })
}

/// A-Hutch++ with absolute tolerance `eps`.
#[pyfunction]
#[pyo3(signature = (op, eps, delta=0.05, seed=0, block=1, schedule="coarse"))]
fn a_hutch_pp(
    py: Python<'_>,
    op: &PyOperator,
    eps: f64,
    delta: f64,
    seed: u64,
    block: usize,
    schedule: &str,
) -> Report {
    let cfg = AdaptiveConfig::practical(eps, delta, seed).with_block(block, self::schedule(schedule)?);
    run(py, || estimators::a_hutch_pp(op.inner.op.as_ref(), &cfg))
}

/// Prototype adaptive estimator; `ell > 0` selects the guaranteed mode.
#[pyfunction]
#[pyo3(signature = (op, eps, delta=0.05, seed=0, ell=0.0, block=1))]
fn prototype_adaptive(
    py: Python<'_>,
    op: &PyOperator,
    eps: f64,
    delta: f64,
    seed: u64,
    ell: f64,
    block: usize,
) -> Report {
    let cfg = if ell > 0.0 {
        AdaptiveConfig::guaranteed(eps, delta, ell, seed)
    } else {
        AdaptiveConfig::practical(eps, delta, seed)
    }
    .with_block(block, BlockSchedule::Coarse);
    run(py, || estimators::prototype_adaptive(op.inner.op.as_ref(), &cfg))
}

#[pyfunction]
#[pyo3(signature = (op, m, seed=0, split=(0.32, 0.35, 0.33)))]
fn single_pass_hutch_pp(py: Python<'_>, op: &PyOperator, m: usize, seed: u64, split: (f64, f64, f64)) -> Report {
    let split = SinglePassSplit {
        c1: split.0,
        c2: split.1,
        c3: split.2,
    };
    run(py, || {
        estimators::single_pass_hutch_pp(op.inner.op.as_ref(), m, split, seed)
    })
}

#[pyfunction]
#[pyo3(signature = (op, m, seed=0))]
fn nystrom_pp(py: Python<'_>, op: &PyOperator, m: usize, seed: u64) -> Report {
    run(py, || estimators::nystrom_pp(op.inner.op.as_ref(), m, seed))
}

/// Runs an experiment from its JSON description and returns the CSV text.
#[pyfunction]
fn run_experiment(py: Python<'_>, spec_json: &str) -> PyResult<String> {
    let spec: ExperimentSpec =
        serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(format!("bad experiment spec: {e}")))?;
    let rows = py.detach(|| harness::run_experiment(&spec)).map_err(to_py)?;
    let mut out = Vec::new();
    harness::write_csv(&rows, &mut out).map_err(|e| PyOSError::new_err(e.to_string()))?;
    Ok(String::from_utf8_lossy(&out).into_owned())
}

/// Failure-fraction table as CSV text.
#[pyfunction]
#[pyo3(signature = (op, eps_factors, deltas, repeats=1000, seed=0, block=1))]
fn failure_table(
    py: Python<'_>,
    op: &PyOperator,
    eps_factors: Vec<f64>,
    deltas: Vec<f64>,
    repeats: usize,
    seed: u64,
    block: usize,
) -> PyResult<String> {
    let table = py
        .detach(|| harness::failure_table(&op.inner, &eps_factors, &deltas, repeats, seed, block))
        .map_err(to_py)?;
    Ok(table.to_csv())
}

#[pyfunction]
fn alpha_k(k: usize, delta: f64) -> PyResult<f64> {
    special::alpha_k(k, delta).map(|a| a.value).map_err(to_py)
}

/// Hutchinson sample constant `C(eps, delta)` used by the adaptive estimators.
#[pyfunction]
#[pyo3(signature = (eps, delta, ell=0.0))]
fn sample_constant(eps: f64, delta: f64, ell: f64) -> PyResult<f64> {
    let tc = special::TailConstants::new(eps, delta, ell).map_err(to_py)?;
    Ok(special::sample_constant(&tc))
}

#[pyfunction]
fn reg_lower_gamma(s: f64, x: f64) -> PyResult<f64> {
    special::reg_lower_gamma(s, x).map_err(to_py)
}

#[pyfunction]
fn hanson_wright_c(c: f64) -> PyResult<f64> {
    special::hanson_wright_c(c).map_err(to_py)
}

#[pymodule]
fn adatrace(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOperator>()?;
    m.add_class::<PyTraceReport>()?;
    m.add_function(wrap_pyfunction!(hutchinson, m)?)?;
    m.add_function(wrap_pyfunction!(hutch_pp, m)?)?;
    m.add_function(wrap_pyfunction!(a_hutch_pp, m)?)?;
    m.add_function(wrap_pyfunction!(prototype_adaptive, m)?)?;
    m.add_function(wrap_pyfunction!(single_pass_hutch_pp, m)?)?;
    m.add_function(wrap_pyfunction!(nystrom_pp, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(failure_table, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_k, m)?)?;
    m.add_function(wrap_pyfunction!(sample_constant, m)?)?;
    m.add_function(wrap_pyfunction!(reg_lower_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(hanson_wright_c, m)?)?;
    Ok(())
}
