//! Python bindings: packet states, clock models, rate fits, the dilation
//! measure, the weak-field metric, and the scenario runner.
//!
//! Build with `cargo build --release -p chronosim-py`; the resulting
//! `libchronosim.so` imports as the `chronosim` module once renamed to
//! `chronosim.so` (see `python/smoke_test.py`).

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use chronosim_core::clock::{two_level_clock, uniform_ladder_clock, ClockModel};
use chronosim_core::error::Error;
use chronosim_core::evolve::exact_flat_space_evolve;
use chronosim_core::hamiltonian::decompose_hamiltonian;
use chronosim_core::metric::{pn_metric_expansion_with_g, MetricCoefficients};
use chronosim_core::observables::{
    classical_average_rate, coherent_discrimination_demo, fit_rate_factor,
    quantum_dilation_measure,
};
use chronosim_core::ordering::OrderingKind;
use chronosim_core::scenario::{
    builtin_config, list_scenarios, parse_config, run_scenario, ResultRecord, RunOptions,
};
use chronosim_core::states::{self, CMDensity, PureCMState};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Gaussian momentum-space packet, the elementary centre-of-mass state.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct WavePacket {
    inner: states::WavePacket,
}

#[pymethods]
impl WavePacket {
    #[new]
    #[pyo3(signature = (p_mean, p_spread, x_mean=0.0, phase=0.0))]
    fn new(p_mean: f64, p_spread: f64, x_mean: f64, phase: f64) -> PyResult<Self> {
        let inner = states::WavePacket::new(p_mean, p_spread, x_mean, phase).map_err(to_py_err)?;
        Ok(WavePacket { inner })
    }

    #[getter]
    fn p_mean(&self) -> f64 {
        self.inner.p_mean()
    }

    #[getter]
    fn p_spread(&self) -> f64 {
        self.inner.p_spread()
    }

    #[getter]
    fn x_mean(&self) -> f64 {
        self.inner.x_mean()
    }

    /// `<self|other>` including the relative phase.
    fn overlap(&self, other: &WavePacket) -> Complex64 {
        self.inner.overlap(&other.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "WavePacket(p_mean={}, p_spread={}, x_mean={})",
            self.inner.p_mean(),
            self.inner.p_spread(),
            self.inner.x_mean()
        )
    }
}

/// Normalized superposition of wave packets.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct PacketState {
    inner: PureCMState,
}

#[pymethods]
impl PacketState {
    #[new]
    fn new(terms: Vec<(Complex64, WavePacket)>) -> PyResult<Self> {
        let terms = terms.into_iter().map(|(a, p)| (a, p.inner)).collect();
        let inner = PureCMState::new(terms).map_err(to_py_err)?;
        Ok(PacketState { inner })
    }

    /// Single-packet state.
    #[staticmethod]
    fn single(packet: &WavePacket) -> Self {
        PacketState {
            inner: PureCMState::single(packet.inner.clone()),
        }
    }

    /// Two-branch state `cos(theta)|a> + e^{i phi} sin(theta)|b>`.
    #[staticmethod]
    fn two_branch(theta: f64, phi: f64, a: &WavePacket, b: &WavePacket) -> PyResult<Self> {
        let inner = states::superpose(
            theta,
            phi,
            &PureCMState::single(a.inner.clone()),
            &PureCMState::single(b.inner.clone()),
        )
        .map_err(to_py_err)?;
        Ok(PacketState { inner })
    }

    /// Closed-form `<x^j p^k>` in symmetric ordering.
    fn moment(&self, x_pow: u32, p_pow: u32) -> Complex64 {
        self.inner.moment(x_pow, p_pow)
    }

    fn momentum_density(&self, p: f64) -> f64 {
        self.inner.momentum_density(p)
    }

    fn overlap(&self, other: &PacketState) -> Complex64 {
        self.inner.overlap(&other.inner)
    }
}

/// Internal clock mechanism: a two-level atom or a truncated uniform
/// ladder, optionally with mechanism sensitivity `kappa`.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Clock {
    inner: ClockModel,
}

#[pymethods]
impl Clock {
    #[new]
    #[pyo3(signature = (omega, dim=2, kappa=0.0))]
    fn new(omega: f64, dim: usize, kappa: f64) -> PyResult<Self> {
        let base = if dim == 2 {
            two_level_clock(omega)
        } else {
            uniform_ladder_clock(omega, dim)
        }
        .map_err(to_py_err)?;
        let inner = base.with_kappa(kappa).map_err(to_py_err)?;
        Ok(Clock { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa()
    }

    /// Recurrence period of the free evolution.
    fn period(&self) -> PyResult<f64> {
        self.inner.period().map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("Clock(dim={}, kappa={})", self.inner.dim(), self.inner.kappa())
    }
}

/// Weak-field metric expansion around a reference radius, with the exact
/// isotropic form available for residual checks.
#[pyclass(frozen)]
struct PnMetric {
    inner: MetricCoefficients,
}

#[pymethods]
impl PnMetric {
    #[new]
    #[pyo3(signature = (source_mass, r0, grav_const=1.0))]
    fn new(source_mass: f64, r0: f64, grav_const: f64) -> PyResult<Self> {
        let inner =
            pn_metric_expansion_with_g(source_mass, r0, grav_const).map_err(to_py_err)?;
        Ok(PnMetric { inner })
    }

    /// Field strength GM/r at radius `r`.
    fn epsilon(&self, r: f64) -> PyResult<f64> {
        self.inner.epsilon(r).map_err(to_py_err)
    }

    /// Observer-normalized time-time coefficient at radius `r`.
    fn g00(&self, r: f64) -> PyResult<f64> {
        self.inner.g00(r).map_err(to_py_err)
    }

    /// Truncation coefficients of the observer-normalized expansion.
    fn observer_poly(&self) -> [f64; 3] {
        *self.inner.observer_poly()
    }

    fn validity_warning(&self, r: f64) -> Option<String> {
        self.inner.validity_warning(r)
    }
}

/// Evolve a packet state under a flat-space clock Hamiltonian and fit the
/// time-rescaling factor of the reduced clock state.
#[pyfunction]
#[pyo3(signature = (state, clock, mass, t, n_p=512))]
fn fitted_rate(
    state: &PacketState,
    clock: &Clock,
    mass: f64,
    t: f64,
    n_p: usize,
) -> PyResult<(f64, f64)> {
    let rho = CMDensity::pure(state.inner.clone());
    let report = exact_flat_space_evolve(&rho, &clock.inner, mass, t, n_p).map_err(to_py_err)?;
    let est = fit_rate_factor(&report.rho_clock, &clock.inner, &clock.inner.initial_density(), t)
        .map_err(to_py_err)?;
    Ok((est.s, est.residual))
}

/// First-order classical average rate `1 + <v1>` for a packet state.
#[pyfunction]
#[pyo3(signature = (state, mass, gravity=0.0))]
fn classical_rate(state: &PacketState, mass: f64, gravity: f64) -> PyResult<f64> {
    let rho = CMDensity::pure(state.inner.clone());
    let decomp = decompose_hamiltonian(mass, gravity, OrderingKind::Weyl).map_err(to_py_err)?;
    classical_average_rate(&rho, &decomp).map_err(to_py_err)
}

/// Rate difference between a two-branch superposition and the matching
/// classical mixture.
#[pyfunction]
#[pyo3(signature = (theta, phi, a, b, clock, mass, t=1.0))]
fn dilation_measure(
    theta: f64,
    phi: f64,
    a: &WavePacket,
    b: &WavePacket,
    clock: &Clock,
    mass: f64,
    t: f64,
) -> PyResult<f64> {
    let decomp = decompose_hamiltonian(mass, 0.0, OrderingKind::Weyl).map_err(to_py_err)?;
    quantum_dilation_measure(theta, phi, &a.inner, &b.inner, &clock.inner, &decomp, t)
        .map_err(to_py_err)
}

/// Dilation measure and overlap for an equal pair of oscillator coherent
/// states alpha, beta.
#[pyfunction]
#[pyo3(signature = (alpha, beta, length=1.0))]
fn coherent_demo(py: Python<'_>, alpha: Complex64, beta: Complex64, length: f64) -> PyResult<Py<PyDict>> {
    let report = coherent_discrimination_demo(alpha, beta, length).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("overlap", report.overlap)?;
    out.set_item("momentum_l1_distance", report.momentum_l1_distance)?;
    out.set_item("measure", report.measure)?;
    Ok(out.unbind())
}

/// Builtin scenario names with one-line summaries, in registry order.
#[pyfunction]
#[pyo3(name = "list_scenarios")]
fn list_scenarios_py() -> Vec<(String, String)> {
    list_scenarios()
        .iter()
        .map(|info| (info.name.to_string(), info.summary.to_string()))
        .collect()
}

/// Canonical config text of a builtin scenario, ready to edit and feed
/// back through `run_config`.
#[pyfunction]
fn builtin_config_text(name: &str) -> PyResult<String> {
    builtin_config(name)
        .map(|cfg| cfg.canonical_text())
        .ok_or_else(|| PyValueError::new_err(format!("no builtin scenario named `{name}`")))
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().unbind().into_any(),
        serde_json::Value::Number(n) => n
            .as_f64()
            .unwrap_or(f64::NAN)
            .into_pyobject(py)?
            .unbind()
            .into_any(),
        serde_json::Value::String(s) => s.into_pyobject(py)?.unbind().into_any(),
        other => other.to_string().into_pyobject(py)?.unbind().into_any(),
    })
}

fn record_to_dict(py: Python<'_>, record: &ResultRecord) -> PyResult<Py<PyDict>> {
    let out = PyDict::new(py);
    out.set_item("scenario", &record.scenario)?;
    out.set_item("units", &record.units)?;
    out.set_item("tool_version", &record.tool_version)?;
    out.set_item("config_hash", &record.config_hash)?;
    out.set_item("compute_error", record.compute_error.as_deref())?;

    let rows = PyList::empty(py);
    for row in &record.rows {
        let r = PyDict::new(py);
        r.set_item("t", row.t)?;
        r.set_item("rate", row.rate)?;
        r.set_item("residual", row.residual)?;
        r.set_item("trace_drift", row.trace_drift)?;
        r.set_item("measure", row.measure)?;
        r.set_item("failed", row.failed)?;
        let extra = PyDict::new(py);
        for (k, v) in &row.extra {
            extra.set_item(k, json_to_py(py, v)?)?;
        }
        r.set_item("extra", extra)?;
        rows.append(r)?;
    }
    out.set_item("rows", rows)?;

    let verdicts = PyDict::new(py);
    for (k, v) in &record.verdicts {
        verdicts.set_item(k, *v)?;
    }
    out.set_item("verdicts", verdicts)?;
    let slopes = PyDict::new(py);
    for (k, v) in &record.slopes {
        slopes.set_item(k, *v)?;
    }
    out.set_item("slopes", slopes)?;
    let metrics = PyDict::new(py);
    for (k, v) in &record.metrics {
        metrics.set_item(k, *v)?;
    }
    out.set_item("metrics", metrics)?;
    Ok(out.unbind())
}

/// Run a builtin scenario by name.
#[pyfunction]
#[pyo3(signature = (name, grid_n=None, tol=None))]
fn run_builtin(
    py: Python<'_>,
    name: &str,
    grid_n: Option<usize>,
    tol: Option<f64>,
) -> PyResult<Py<PyDict>> {
    let cfg = builtin_config(name)
        .ok_or_else(|| PyValueError::new_err(format!("no builtin scenario named `{name}`")))?;
    let record = run_scenario(&cfg, &RunOptions { grid_n, tol }).map_err(to_py_err)?;
    record_to_dict(py, &record)
}

/// Run a scenario from config text (the same grammar the CLI reads).
#[pyfunction]
#[pyo3(signature = (text, grid_n=None, tol=None))]
fn run_config(
    py: Python<'_>,
    text: &str,
    grid_n: Option<usize>,
    tol: Option<f64>,
) -> PyResult<Py<PyDict>> {
    let cfg = parse_config(text).map_err(to_py_err)?;
    let record = run_scenario(&cfg, &RunOptions { grid_n, tol }).map_err(to_py_err)?;
    record_to_dict(py, &record)
}

#[pymodule]
fn chronosim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<WavePacket>()?;
    m.add_class::<PacketState>()?;
    m.add_class::<Clock>()?;
    m.add_class::<PnMetric>()?;
    m.add_function(wrap_pyfunction!(fitted_rate, m)?)?;
    m.add_function(wrap_pyfunction!(classical_rate, m)?)?;
    m.add_function(wrap_pyfunction!(dilation_measure, m)?)?;
    m.add_function(wrap_pyfunction!(coherent_demo, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios_py, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_config_text, m)?)?;
    m.add_function(wrap_pyfunction!(run_builtin, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
