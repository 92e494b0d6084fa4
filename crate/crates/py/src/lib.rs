use blowup_lab::cli::verify;
use blowup_lab::error::LabError;
use blowup_lab::modes::{explicit_solution as explicit, integrate_system, ModeSystem};
use blowup_lab::numerics::make_grid;
use blowup_lab::profile::{self, solve_q};
use blowup_lab::sim::{run_blowup, SimConfig};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn py_err(e: LabError) -> PyErr {
    match e {
        LabError::Usage(_) | LabError::Parameter(_) | LabError::Domain(_) | LabError::Parse { .. } => {
            PyValueError::new_err(e.to_string())
        }
        LabError::Io(_) | LabError::File(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Converts a serializable value into plain Python objects through `json.loads`.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Tail exponent γ of π/2 − Q in dimension d.
#[pyfunction]
fn gamma_exponent(d: usize) -> PyResult<f64> {
    profile::gamma_exponent(d).map_err(py_err)
}

/// Integer and fractional parts (ħ, δ) of ½(d/2 − γ).
#[pyfunction]
fn spectral_params(d: usize) -> PyResult<(i32, f64)> {
    profile::spectral_params(d).map_err(py_err)
}

/// Ground state on a log grid: columns y, Q, LamQ, V and a summary.
#[pyfunction]
#[pyo3(signature = (d, y_min = 1e-4, y_max = 1e4, n = 2048))]
fn solve_profile<'py>(py: Python<'py>, d: usize, y_min: f64, y_max: f64, n: usize) -> PyResult<Bound<'py, PyDict>> {
    let pack = py.detach(|| make_grid(d, y_min, y_max, n).and_then(|g| solve_q(&g))).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("y", pack.grid().nodes().to_vec())?;
    out.set_item("Q", pack.q.values().to_vec())?;
    out.set_item("LamQ", pack.lam_q.values().to_vec())?;
    out.set_item("V", pack.v.values().to_vec())?;
    out.set_item("summary", to_py(py, &pack.summary().map_err(py_err)?)?)?;
    Ok(out)
}

/// Explicit solution b_k(s) of the mode system.
#[pyfunction]
fn explicit_solution(d: usize, ell: usize, l: usize, s: f64) -> PyResult<Vec<f64>> {
    let sys = ModeSystem::new(d, ell, l).map_err(py_err)?;
    explicit(&sys, s).map_err(py_err)
}

/// Integrates the mode system from its explicit solution at s0.
#[pyfunction]
#[pyo3(signature = (d, ell, l, s0, s1 = 1e9))]
fn integrate_modes<'py>(
    py: Python<'py>,
    d: usize,
    ell: usize,
    l: usize,
    s0: f64,
    s1: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (sys, traj) = py
        .detach(|| {
            let sys = ModeSystem::new(d, ell, l)?;
            let traj = integrate_system(&sys, &explicit(&sys, s0)?, s0, s1)?;
            Ok::<_, LabError>((sys, traj))
        })
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("s", traj.s.clone())?;
    out.set_item("t", traj.t.clone())?;
    out.set_item("lambda", traj.lambda.clone())?;
    out.set_item("b", (0..traj.s.len()).map(|i| traj.b(&sys, i)).collect::<Vec<_>>())?;
    out.set_item("stop", to_py(py, &traj.stop)?)?;
    out.set_item("fit", to_py(py, &traj.fit)?)?;
    Ok(out)
}

/// Runs the rescaled PDE from `key = value` config text.
#[pyfunction]
fn simulate<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SimConfig::parse(config).map_err(py_err)?;
    let run = py.detach(|| run_blowup(cfg)).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("t", run.rows.iter().map(|r| r.t).collect::<Vec<_>>())?;
    out.set_item("lambda", run.rows.iter().map(|r| r.lambda).collect::<Vec<_>>())?;
    out.set_item("b", run.rows.iter().map(|r| r.b.clone()).collect::<Vec<_>>())?;
    out.set_item("energy", run.rows.iter().map(|r| r.energy).collect::<Vec<_>>())?;
    out.set_item("report", to_py(py, &run.report)?)?;
    Ok(out)
}

/// Profile, operator, correction and mode checks for each dimension.
#[pyfunction]
#[pyo3(signature = (dims = vec![7, 8, 11], seed = 0, threads = 1))]
fn verify_all<'py>(py: Python<'py>, dims: Vec<usize>, seed: u64, threads: usize) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(|| verify::verify_all(&dims, seed, threads.max(1), None)).map_err(py_err)?;
    to_py(py, &report)
}

#[pymodule]
#[pyo3(name = "blowup_lab")]
fn blowup_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(gamma_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_params, m)?)?;
    m.add_function(wrap_pyfunction!(solve_profile, m)?)?;
    m.add_function(wrap_pyfunction!(explicit_solution, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_modes, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify_all, m)?)?;
    Ok(())
}
