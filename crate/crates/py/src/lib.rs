//! Python bindings: `import hsc_energy`.

use hsc_core::analytic::{self, DEFAULT_ROOT_TOL};
use hsc_core::distributions::{self, trial_rng, PoissonEvents, ScriptedEvents};
use hsc_core::simulate::{self, DEFAULT_HORIZON, DEFAULT_LADDER_STEPS, DEFAULT_TRIALS};
use hsc_core::sweep::{self, SweepSpec};
use hsc_core::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyString};
use serde_json::Value;

create_exception!(hsc_energy, HscError, PyException);
create_exception!(hsc_energy, DomainError, HscError);
create_exception!(hsc_energy, PreconditionError, HscError);
create_exception!(hsc_energy, ConvergenceError, HscError);
create_exception!(hsc_energy, GridError, HscError);

fn to_py(err: Error) -> PyErr {
    let msg = err.to_string();
    match err {
        Error::Domain(_) => DomainError::new_err(msg),
        Error::Precondition(_) => PreconditionError::new_err(msg),
        Error::Convergence(_) => ConvergenceError::new_err(msg),
        Error::Grid(_) => GridError::new_err(msg),
        Error::Parse { .. } | Error::Value(_) => PyValueError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        Error::Serialize(_) => HscError::new_err(msg),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| HscError::new_err(e.to_string()))?;
    json_to_py(py, &json)
}

/// Packet-size law, e.g. `DistributionSpec.parse("unif:mean=1")`.
#[pyclass(name = "DistributionSpec", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyDistributionSpec(distributions::DistributionSpec);

#[pymethods]
impl PyDistributionSpec {
    #[new]
    fn new(kind: &str, mean: f64) -> PyResult<Self> {
        format!("{kind}:mean={mean}").parse().map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        text.parse().map(Self).map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind().tag()
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn moments(&self) -> (f64, f64) {
        self.0.moments()
    }

    fn mgf(&self, r: f64) -> PyResult<f64> {
        self.0.mgf(r).map_err(to_py)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }

    /// `n` draws from stream 0 of `seed`.
    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = trial_rng(seed, 0);
        (0..n).map(|_| self.0.sample(&mut rng)).collect()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("DistributionSpec('{}')", self.0)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

#[derive(FromPyObject)]
enum PacketArg {
    Spec(PyDistributionSpec),
    Text(String),
}

impl PacketArg {
    fn resolve(self) -> PyResult<distributions::DistributionSpec> {
        match self {
            PacketArg::Spec(s) => Ok(s.0),
            PacketArg::Text(t) => t.parse().map_err(to_py),
        }
    }
}

#[pyclass(name = "SystemParams", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PySystemParams(analytic::SystemParams);

#[pymethods]
impl PySystemParams {
    #[new]
    #[pyo3(signature = (lambda_, packet, p = 1.0, u0 = 0.0))]
    fn new(lambda_: f64, packet: PacketArg, p: f64, u0: f64) -> PyResult<Self> {
        analytic::SystemParams::new(lambda_, packet.resolve()?, p, u0)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (rho, packet, p = 1.0, u0 = 0.0))]
    fn from_rho(rho: f64, packet: PacketArg, p: f64, u0: f64) -> PyResult<Self> {
        analytic::SystemParams::from_rho(rho, packet.resolve()?, p, u0)
            .map(Self)
            .map_err(to_py)
    }

    fn with_u0(&self, u0: f64) -> PyResult<Self> {
        self.0.with_u0(u0).map(Self).map_err(to_py)
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.0.lambda
    }

    #[getter]
    fn packet(&self) -> PyDistributionSpec {
        PyDistributionSpec(self.0.packet)
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p
    }

    #[getter]
    fn u0(&self) -> f64 {
        self.0.u0
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.0.rho()
    }

    fn __repr__(&self) -> String {
        let s = &self.0;
        format!(
            "SystemParams(lambda_={}, packet='{}', p={}, u0={})",
            s.lambda, s.packet, s.p, s.u0
        )
    }
}

#[pyclass(name = "AdjustmentResult", frozen, get_all)]
struct PyAdjustmentResult {
    r_star: f64,
    method: &'static str,
    residual: f64,
    iterations: usize,
}

impl From<analytic::AdjustmentResult> for PyAdjustmentResult {
    fn from(r: analytic::AdjustmentResult) -> Self {
        Self {
            r_star: r.r_star,
            method: match r.method {
                analytic::SolveMethod::ClosedForm => "closed_form",
                analytic::SolveMethod::Numeric => "numeric",
            },
            residual: r.residual,
            iterations: r.iterations,
        }
    }
}

#[pyclass(name = "EstimateWithCI", frozen, get_all)]
struct PyEstimate {
    estimate: f64,
    stderr: f64,
    ci95_lo: f64,
    ci95_hi: f64,
    trials: u64,
    horizon: f64,
    seed: u64,
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "EstimateWithCI(estimate={}, stderr={}, ci95=[{}, {}], trials={})",
            self.estimate, self.stderr, self.ci95_lo, self.ci95_hi, self.trials
        )
    }
}

impl From<simulate::EstimateWithCI> for PyEstimate {
    fn from(e: simulate::EstimateWithCI) -> Self {
        Self {
            estimate: e.estimate,
            stderr: e.stderr,
            ci95_lo: e.ci95_lo,
            ci95_hi: e.ci95_hi,
            trials: e.trials,
            horizon: e.horizon,
            seed: e.seed,
        }
    }
}

/// `(rho, status)` with status `"self_sustainable_possible"` or
/// `"unsustainable_certain"`.
#[pyfunction]
fn utilization(params: PySystemParams) -> (f64, &'static str) {
    let v = analytic::utilization(&params.0);
    let status = match v.status {
        analytic::Sustainability::SelfSustainablePossible => "self_sustainable_possible",
        analytic::Sustainability::UnsustainableCertain => "unsustainable_certain",
    };
    (v.rho, status)
}

#[pyfunction]
fn expected_surplus(params: PySystemParams, t: f64) -> PyResult<f64> {
    analytic::expected_surplus(&params.0, t).map_err(to_py)
}

#[pyfunction]
fn cgf_z(params: PySystemParams, r: f64) -> PyResult<f64> {
    analytic::cgf_z(&params.0, r).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (params, tol = DEFAULT_ROOT_TOL, numeric = false))]
fn solve_adjustment_coefficient(params: PySystemParams, tol: f64, numeric: bool) -> PyResult<PyAdjustmentResult> {
    let res = if numeric {
        analytic::solve_adjustment_coefficient_numeric(&params.0, tol)
    } else {
        analytic::solve_adjustment_coefficient(&params.0, tol)
    };
    res.map(Into::into).map_err(to_py)
}

/// `(quadratic_fixed_point, mean_variance_guess)`
#[pyfunction]
fn approx_adjustment_coefficient(params: PySystemParams) -> PyResult<(f64, f64)> {
    let a = analytic::approx_adjustment_coefficient(&params.0).map_err(to_py)?;
    Ok((a.quadratic_fixed_point, a.mean_variance_guess))
}

#[pyfunction]
fn outage_bound(r_star: f64, u0: f64) -> PyResult<f64> {
    analytic::outage_bound(r_star, u0).map_err(to_py)
}

#[pyfunction]
fn eventual_outage_poisson_exact(params: PySystemParams, r_star: f64) -> PyResult<f64> {
    analytic::eventual_outage_poisson_exact(&params.0, r_star).map_err(to_py)
}

#[pyfunction]
fn asymptotic_outage(theta: f64, r_star: f64, mu_tilde: f64, u0: f64) -> PyResult<f64> {
    analytic::asymptotic_outage(theta, r_star, mu_tilde, u0).map_err(to_py)
}

#[pyfunction]
fn required_initial_energy(r_star: f64, epsilon: f64) -> PyResult<f64> {
    analytic::required_initial_energy(r_star, epsilon).map_err(to_py)
}

#[pyfunction]
fn ladder_height_density_poisson(params: PySystemParams, r_star: f64, x: f64) -> PyResult<f64> {
    analytic::ladder_height_density_poisson(&params.0, r_star, x).map_err(to_py)
}

#[pyfunction]
fn solve_renewal_equation(py: Python<'_>, f_h: Vec<f64>, theta: f64, step: f64) -> PyResult<Vec<f64>> {
    py.detach(|| analytic::solve_renewal_equation(&f_h, theta, step))
        .map_err(to_py)
}

#[pyfunction]
fn density_z(params: PySystemParams, z: f64) -> f64 {
    analytic::density_z(&params.0, z)
}

#[pyfunction]
fn stationary_outage(params: PySystemParams) -> PyResult<f64> {
    analytic::stationary_outage(&params.0).map_err(to_py)
}

#[pyfunction]
fn outage_duration_cdf(params: PySystemParams, x: f64) -> PyResult<f64> {
    analytic::outage_duration_cdf(&params.0, x).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (params, horizon = DEFAULT_HORIZON, trials = DEFAULT_TRIALS, seed = 42))]
fn estimate_eventual_outage(
    py: Python<'_>,
    params: PySystemParams,
    horizon: f64,
    trials: u64,
    seed: u64,
) -> PyResult<PyEstimate> {
    py.detach(|| simulate::estimate_eventual_outage(&params.0, horizon, trials, seed))
        .map(Into::into)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (params, u0s, horizon = DEFAULT_HORIZON, trials = DEFAULT_TRIALS, seed = 42))]
fn estimate_eventual_outage_grid(
    py: Python<'_>,
    params: PySystemParams,
    u0s: Vec<f64>,
    horizon: f64,
    trials: u64,
    seed: u64,
) -> PyResult<Vec<PyEstimate>> {
    py.detach(|| simulate::estimate_eventual_outage_grid(&params.0, &u0s, horizon, trials, seed))
        .map(|v| v.into_iter().map(Into::into).collect())
        .map_err(to_py)
}

/// First passage over a scripted list of `(inter_arrival, energy)` pairs.
/// Returns `(outage, tau, arrivals_observed)`.
#[pyfunction]
fn simulate_first_passage(
    params: PySystemParams,
    horizon: f64,
    events: Vec<(f64, f64)>,
) -> PyResult<(bool, Option<f64>, u64)> {
    let script = ScriptedEvents::new(&events).map_err(to_py)?;
    let out = simulate::simulate_first_passage(&params.0, horizon, script.iter());
    Ok((out.outage, out.tau, out.arrivals_observed))
}

/// `(time, surplus)` breakpoints of trial 0 under `seed`.
#[pyfunction]
#[pyo3(signature = (params, horizon, seed = 42))]
fn record_path(params: PySystemParams, horizon: f64, seed: u64) -> PyResult<Vec<(f64, f64)>> {
    let events = PoissonEvents::new(params.0.lambda, params.0.packet, trial_rng(seed, 0));
    let path = simulate::record_path(&params.0, horizon, events).map_err(to_py)?;
    Ok(path.into_iter().map(|p| (p.time, p.surplus)).collect())
}

/// Ladder statistics over `walks` seeded walks: a dict with the fraction of
/// walks that reached a ladder point and the empirical `F_M(params.u0)`.
#[pyfunction]
#[pyo3(signature = (params, walks, max_steps = DEFAULT_LADDER_STEPS, seed = 42))]
fn ladder_statistics<'py>(
    py: Python<'py>,
    params: PySystemParams,
    walks: u64,
    max_steps: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let samples = py
        .detach(|| simulate::sample_ladder_walks(&params.0, max_steps, walks, seed))
        .map_err(to_py)?;
    let dict = PyDict::new(py);
    dict.set_item("ladder_fraction", simulate::ladder_fraction(&samples).map_err(to_py)?)?;
    dict.set_item(
        "phi_from_max",
        simulate::estimate_phi_from_max(&samples, params.0.u0).map_err(to_py)?,
    )?;
    Ok(dict.into_any())
}

#[pyfunction]
#[pyo3(signature = (params, steps, burn_in = None, seed = 42))]
fn simulate_lindley<'py>(
    py: Python<'py>,
    params: PySystemParams,
    steps: u64,
    burn_in: Option<u64>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let burn_in = burn_in.unwrap_or(steps / 10);
    let stats = py
        .detach(|| simulate::estimate_battery_stationary(&params.0, steps, burn_in, seed))
        .map_err(to_py)?;
    to_dict(py, &stats)
}

/// Analysis report as a dict.
#[pyfunction]
fn analyze<'py>(py: Python<'py>, params: PySystemParams) -> PyResult<Bound<'py, PyAny>> {
    let report = sweep::run_analyze(&params.0).map_err(to_py)?;
    to_dict(py, &report)
}

/// Sweep rows as a list of dicts keyed by the CSV columns.
#[pyfunction]
#[pyo3(signature = (u0_grid, rho_list, dists, p = 1.0, trials = 0, horizon = DEFAULT_HORIZON, seed = 42))]
#[allow(clippy::too_many_arguments)]
fn run_sweep<'py>(
    py: Python<'py>,
    u0_grid: Vec<f64>,
    rho_list: Vec<f64>,
    dists: Vec<PacketArg>,
    p: f64,
    trials: u64,
    horizon: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let dist_list = dists
        .into_iter()
        .map(PacketArg::resolve)
        .collect::<PyResult<Vec<_>>>()?;
    let spec = SweepSpec {
        u0_grid,
        rho_list,
        dist_list,
        p,
        trials,
        horizon,
        seed,
    };
    let rows = py.detach(|| sweep::run_sweep(&spec)).map_err(to_py)?;
    to_dict(py, &rows)
}

#[pymodule]
fn hsc_energy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("HscError", py.get_type::<HscError>())?;
    m.add("DomainError", py.get_type::<DomainError>())?;
    m.add("PreconditionError", py.get_type::<PreconditionError>())?;
    m.add("ConvergenceError", py.get_type::<ConvergenceError>())?;
    m.add("GridError", py.get_type::<GridError>())?;
    m.add_class::<PyDistributionSpec>()?;
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyAdjustmentResult>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(utilization, m)?)?;
    m.add_function(wrap_pyfunction!(expected_surplus, m)?)?;
    m.add_function(wrap_pyfunction!(cgf_z, m)?)?;
    m.add_function(wrap_pyfunction!(solve_adjustment_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(approx_adjustment_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(outage_bound, m)?)?;
    m.add_function(wrap_pyfunction!(eventual_outage_poisson_exact, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_outage, m)?)?;
    m.add_function(wrap_pyfunction!(required_initial_energy, m)?)?;
    m.add_function(wrap_pyfunction!(ladder_height_density_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(solve_renewal_equation, m)?)?;
    m.add_function(wrap_pyfunction!(density_z, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_outage, m)?)?;
    m.add_function(wrap_pyfunction!(outage_duration_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_eventual_outage, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_eventual_outage_grid, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_first_passage, m)?)?;
    m.add_function(wrap_pyfunction!(record_path, m)?)?;
    m.add_function(wrap_pyfunction!(ladder_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_lindley, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
