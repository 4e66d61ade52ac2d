//! Python bindings.
//!
//! Scenarios cross the boundary as JSON text in the same schema the CLI reads,
//! and results come back as JSON text so Python can load them with `json`.
//! Matrices are nested lists of Python `complex`. The core crate is imported
//! as `qest_core` because this extension module is itself called `qest`.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qest_core::analysis::{fidelity_rate as core_fidelity_rate, purity_rate as core_purity_rate};
use qest_core::campaign::{simulate as core_simulate, simulate_cycles};
use qest_core::output::aggregate;
use qest_core::scenario::{parse_config, preset_json};
use qest_core::verify::{run_verification, VerifyOptions};
use qest_core::{ComplexMatrix, DensityMatrix, MeasurementChannel, Observable, QestError, ScenarioSpec};

fn to_py(e: QestError) -> PyErr {
    match e {
        QestError::Config { .. } | QestError::DimensionMismatch { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<Complex64>>) -> PyResult<ComplexMatrix> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("expected a non-empty square matrix"));
    }
    Ok(ComplexMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn scenario(config: &str, trajectories: Option<usize>, seed: Option<u64>, horizon: Option<f64>) -> PyResult<ScenarioSpec> {
    let mut spec = parse_config(config).map_err(to_py)?;
    if let Some(n) = trajectories {
        spec.n_trajectories = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(t) = horizon {
        spec.horizon = t;
    }
    spec.validate().map_err(to_py)?;
    Ok(spec)
}

fn json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// JSON text of a built-in scenario.
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    let v = preset_json(name).ok_or_else(|| PyValueError::new_err(format!("unknown preset `{name}`")))?;
    json(&v)
}

/// Runs the continuous model and returns `{"trajectories": [...], "stats": ...}` as JSON.
#[pyfunction]
#[pyo3(signature = (config, trajectories=None, seed=None, horizon=None))]
fn simulate(py: Python<'_>, config: &str, trajectories: Option<usize>, seed: Option<u64>, horizon: Option<f64>) -> PyResult<String> {
    let spec = scenario(config, trajectories, seed, horizon)?;
    let records = py.detach(|| core_simulate(&spec)).map_err(to_py)?;
    let stats = aggregate(&records);
    json(&serde_json::json!({ "trajectories": records, "stats": stats }))
}

/// Same as `simulate` for the discrete measurement-cycle model.
#[pyfunction]
#[pyo3(signature = (config, trajectories=None, seed=None, horizon=None))]
fn cycle(py: Python<'_>, config: &str, trajectories: Option<usize>, seed: Option<u64>, horizon: Option<f64>) -> PyResult<String> {
    let spec = scenario(config, trajectories, seed, horizon)?;
    let records = py.detach(|| simulate_cycles(&spec)).map_err(to_py)?;
    let stats = aggregate(&records);
    json(&serde_json::json!({ "trajectories": records, "stats": stats }))
}

/// Full verification report as JSON.
#[pyfunction]
#[pyo3(signature = (config, trajectories=None, seed=None))]
fn verify(py: Python<'_>, config: &str, trajectories: Option<usize>, seed: Option<u64>) -> PyResult<String> {
    let spec = scenario(config, trajectories, seed, None)?;
    let report = py
        .detach(|| run_verification(&spec, &VerifyOptions::default()))
        .map_err(to_py)?;
    json(&report)
}

#[pyfunction]
#[pyo3(signature = (rho, obs, gamma, eta=1.0))]
fn purity_rate(rho: Vec<Vec<Complex64>>, obs: Vec<Vec<Complex64>>, gamma: f64, eta: f64) -> PyResult<f64> {
    let rho = DensityMatrix::new(matrix(rho)?).map_err(to_py)?;
    let ch = MeasurementChannel::new(Observable::new(matrix(obs)?).map_err(to_py)?, gamma, eta).map_err(to_py)?;
    core_purity_rate(&rho, &ch).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (rho, rho_e, obs, gamma, eta=1.0))]
fn fidelity_rate(
    rho: Vec<Vec<Complex64>>,
    rho_e: Vec<Vec<Complex64>>,
    obs: Vec<Vec<Complex64>>,
    gamma: f64,
    eta: f64,
) -> PyResult<f64> {
    let rho = DensityMatrix::new(matrix(rho)?).map_err(to_py)?;
    let rho_e = DensityMatrix::new(matrix(rho_e)?).map_err(to_py)?;
    let ch = MeasurementChannel::new(Observable::new(matrix(obs)?).map_err(to_py)?, gamma, eta).map_err(to_py)?;
    core_fidelity_rate(&rho, &rho_e, &ch).map_err(to_py)
}

#[pymodule(name = "qest")]
fn qest_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(cycle, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(purity_rate, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_rate, m)?)?;
    Ok(())
}
