//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use thinfilm::harness::{self, ScenarioConfig};
use thinfilm::lubrication;
use thinfilm::FilmError;

fn to_py(e: FilmError) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_object<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse(config_json: &str) -> PyResult<ScenarioConfig> {
    ScenarioConfig::from_json(config_json).map_err(to_py)
}

/// Validate a scenario and return it with defaults filled in.
#[pyfunction]
fn load_config<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    to_object(py, &parse(config_json)?)
}

/// Run a scenario into `out_dir` and return the manifest.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, config_json: &str, out_dir: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse(config_json)?;
    let manifest = py.detach(|| harness::run_scenario(&cfg, Path::new(out_dir))).map_err(to_py)?;
    to_object(py, &manifest)
}

/// Epsilon sweep; writes the report when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir=None))]
fn run_sweep<'py>(py: Python<'py>, config_json: &str, out_dir: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse(config_json)?;
    let report = py
        .detach(|| {
            let r = harness::run_epsilon_sweep(&cfg)?;
            if let Some(dir) = out_dir {
                harness::write_sweep(&r, &cfg, Path::new(dir))?;
            }
            Ok::<_, FilmError>(r)
        })
        .map_err(to_py)?;
    to_object(py, &report)
}

/// Coefficient table at time `t` as CSV text.
#[pyfunction]
#[pyo3(signature = (config_json, t=None))]
fn dump_coefficients(py: Python<'_>, config_json: &str, t: Option<f64>) -> PyResult<String> {
    let cfg = parse(config_json)?;
    let t = t.unwrap_or(cfg.t_start);
    py.detach(|| harness::dump_coefficients(&cfg, t)).map_err(to_py)
}

/// Built-in acceptance checks, one dict per criterion.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn verify<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let outcomes = py.detach(|| thinfilm::verify::run_all(seed));
    to_object(py, &outcomes)
}

/// Closed-form pressure of the plane slider at `x` in [0, 1].
#[pyfunction]
#[pyo3(signature = (h_in, h_out, x, mu=1.0, speed=1.0))]
fn slider_pressure(h_in: f64, h_out: f64, x: f64, mu: f64, speed: f64) -> f64 {
    lubrication::slider_pressure(h_in, h_out, mu, speed, x)
}

/// Location and value of the slider pressure peak.
#[pyfunction]
#[pyo3(signature = (h_in, h_out, mu=1.0, speed=1.0))]
fn slider_peak(h_in: f64, h_out: f64, mu: f64, speed: f64) -> (f64, f64) {
    lubrication::slider_peak(h_in, h_out, mu, speed)
}

#[pymodule]
fn thinfilm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(dump_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(slider_pressure, m)?)?;
    m.add_function(wrap_pyfunction!(slider_peak, m)?)?;
    let info = PyDict::new(m.py());
    info.set_item("version", env!("CARGO_PKG_VERSION"))?;
    info.set_item("schema_version", harness::SCHEMA_VERSION)?;
    m.add("build_info", info)?;
    Ok(())
}
