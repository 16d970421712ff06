//! Python bindings. Results come back as plain dicts and lists.

// The pyfunction macro expands `?` on values that are already `PyErr`.
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use relaxopt::attain::{self, AttainConfig, ValueProbeConfig};
use relaxopt::chattering::convergence_study;
use relaxopt::integrate::integrate_relaxed;
use relaxopt::pmp::{self, LambdaConfig, TransversalityConvention};
use relaxopt::relaxed::audit_admissibility;
use relaxopt::systems::{get_scenario_with, Scenario, ScenarioParams, SCENARIO_IDS};
use relaxopt::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::UnknownScenario(_) | Error::UnknownPair { .. } => PyKeyError::new_err(e.to_string()),
        Error::Input(_) | Error::Dimension(_) | Error::Domain(_) | Error::Unsupported(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let json = py.import_bound("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

fn scenario(id: &str, omega: Option<f64>, j: Option<f64>) -> PyResult<Scenario> {
    get_scenario_with(id, &ScenarioParams { omega, j }).map_err(to_py_err)
}

fn convention(name: &str) -> PyResult<TransversalityConvention> {
    match name {
        "definition" => Ok(TransversalityConvention::Definition),
        "theorem" => Ok(TransversalityConvention::Theorem),
        other => Err(PyValueError::new_err(format!(
            "unknown convention `{other}`"
        ))),
    }
}

/// Scenario ids known to the registry.
#[pyfunction]
fn scenario_ids() -> Vec<&'static str> {
    SCENARIO_IDS.to_vec()
}

/// Full scenario description: dynamics, control set, horizon and reference pairs.
#[pyfunction]
#[pyo3(signature = (id, omega=None, j=None))]
fn get_scenario(
    py: Python<'_>,
    id: &str,
    omega: Option<f64>,
    j: Option<f64>,
) -> PyResult<PyObject> {
    to_py(py, &scenario(id, omega, j)?)
}

/// `f(t, x, u)` for a registry scenario.
#[pyfunction]
fn eval_dynamics(id: &str, t: f64, x: Vec<f64>, u: Vec<f64>) -> PyResult<Vec<f64>> {
    let sc = scenario(id, None, None)?;
    sc.system.dynamics.eval(t, &x, &u).map_err(to_py_err)
}

/// State Jacobian `f_x(t, x, u)` as a list of rows.
#[pyfunction]
fn eval_jacobian(id: &str, t: f64, x: Vec<f64>, u: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let sc = scenario(id, None, None)?;
    let jac = sc.system.dynamics.jacobian(t, &x, &u).map_err(to_py_err)?;
    Ok(jac
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect())
}

/// Integrates the relaxed control of a reference pair; returns `{"times", "states"}`.
#[pyfunction]
#[pyo3(signature = (id, pair=None, cells=1000, omega=None, j=None))]
fn simulate(
    py: Python<'_>,
    id: &str,
    pair: Option<&str>,
    cells: usize,
    omega: Option<f64>,
    j: Option<f64>,
) -> PyResult<PyObject> {
    let sc = scenario(id, omega, j)?;
    let pair = sc.pair(pair).map_err(to_py_err)?;
    let mesh = sc.mesh_for(pair, cells).map_err(to_py_err)?;
    let traj =
        integrate_relaxed(&sc.system.dynamics, &pair.control, &sc.x1, &mesh).map_err(to_py_err)?;
    let out = PyDict::new_bound(py);
    out.set_item("times", traj.times())?;
    out.set_item("states", traj.samples)?;
    Ok(out.into_any().unbind())
}

/// Admissibility audit of a reference pair.
#[pyfunction]
#[pyo3(signature = (id, pair=None, tol=1e-9, cells=1000))]
fn audit(
    py: Python<'_>,
    id: &str,
    pair: Option<&str>,
    tol: f64,
    cells: usize,
) -> PyResult<PyObject> {
    let sc = scenario(id, None, None)?;
    let pair = sc.pair(pair).map_err(to_py_err)?;
    let reference = sc.reference(pair, cells).map_err(to_py_err)?;
    let report = audit_admissibility(
        &sc.system.dynamics,
        &reference.trajectory,
        &pair.control,
        tol,
    )
    .map_err(to_py_err)?;
    to_py(py, &report)
}

/// Multiplier-set search on the sphere of terminal covectors.
#[pyfunction]
#[pyo3(signature = (id, pair=None, s=-1, resolution=1e-2, convention_name="definition", cells=1000))]
fn search_lambda(
    py: Python<'_>,
    id: &str,
    pair: Option<&str>,
    s: i8,
    resolution: f64,
    convention_name: &str,
    cells: usize,
) -> PyResult<PyObject> {
    let sc = scenario(id, None, None)?;
    let pair = sc.pair(pair).map_err(to_py_err)?;
    let reference = sc.reference(pair, cells).map_err(to_py_err)?;
    let cfg = LambdaConfig {
        s,
        sphere_resolution: resolution,
        transversality_convention: convention(convention_name)?,
        ..LambdaConfig::default()
    };
    let verdict = pmp::search_lambda(&sc.system, &reference.trajectory, &pair.control, &cfg)
        .map_err(to_py_err)?;
    to_py(py, &verdict)
}

/// Chattering convergence rows for each subdivision count.
#[pyfunction]
#[pyo3(signature = (id, pair=None, p=vec![25, 50, 100], cells=1000))]
fn chatter_study(
    py: Python<'_>,
    id: &str,
    pair: Option<&str>,
    p: Vec<usize>,
    cells: usize,
) -> PyResult<PyObject> {
    let sc = scenario(id, None, None)?;
    let pair = sc.pair(pair).map_err(to_py_err)?;
    let rows = convergence_study(
        &sc.system.dynamics,
        &pair.control,
        &sc.x1,
        &p,
        1.0 / cells as f64,
    )
    .map_err(to_py_err)?;
    to_py(py, &rows)
}

/// Synthesizes an ordinary control reaching the reference endpoint within `eps` of the reference time.
#[pyfunction]
#[pyo3(signature = (id, pair=None, s=-1, eps=1e-2, force=false))]
fn probe_attainability(
    py: Python<'_>,
    id: &str,
    pair: Option<&str>,
    s: i8,
    eps: f64,
    force: bool,
) -> PyResult<PyObject> {
    let sc = scenario(id, None, None)?;
    let pair = sc.pair(pair).map_err(to_py_err)?;
    let cfg = AttainConfig {
        force,
        lambda: LambdaConfig {
            s,
            ..LambdaConfig::default()
        },
        ..AttainConfig::default()
    };
    let result = attain::probe_attainability(&sc, pair, &pair.directions, s, eps, &cfg)
        .map_err(to_py_err)?;
    to_py(py, &result)
}

/// Sampled upper estimate of the minimal time from the scenario's start to `target`.
#[pyfunction]
#[pyo3(signature = (id, target, ball=1e-3, samples=200, seed=42, horizon=2.0))]
fn value_probe(
    py: Python<'_>,
    id: &str,
    target: Vec<f64>,
    ball: f64,
    samples: usize,
    seed: u64,
    horizon: f64,
) -> PyResult<PyObject> {
    let sc = scenario(id, None, None)?;
    let cfg = ValueProbeConfig {
        ball,
        samples,
        seed,
        horizon,
        ..ValueProbeConfig::default()
    };
    let estimate =
        attain::value_probe(&sc.system, sc.t1, &sc.x1, &target, &cfg).map_err(to_py_err)?;
    to_py(py, &estimate)
}

#[pymodule]
fn relaxopt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(scenario_ids, m)?)?;
    m.add_function(wrap_pyfunction!(get_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(eval_dynamics, m)?)?;
    m.add_function(wrap_pyfunction!(eval_jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(search_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(chatter_study, m)?)?;
    m.add_function(wrap_pyfunction!(probe_attainability, m)?)?;
    m.add_function(wrap_pyfunction!(value_probe, m)?)?;
    Ok(())
}
