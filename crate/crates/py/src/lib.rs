//! Python module `pyqvar`: eigen-data, masses, Mellin transforms, the diagonal
//! term and the variance report, plus the command-line entry point.
//!
//! Each binding wraps a plain Rust function returning JSON so the logic is
//! testable without an interpreter.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use qvar::forms::EigenStore;
use qvar::mass::{expected, mass_report};
use qvar::testfn::{mellin as mellin_transform, Bump, BumpKind};
use qvar::trace::WindowWeights;
use qvar::variance::{diagonal_asymptotic, diagonal_numeric, variance_report, ConstantPower, ExponentConfig};
use serde_json::{json, Value};
use std::path::Path;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn psi(alpha: f64) -> Result<Bump, String> {
    Bump::canonical(alpha, BumpKind::PsiSymmetric).map_err(err)
}

fn store(k: &[u32], n: usize, cache_dir: Option<&str>) -> Result<EigenStore, String> {
    EigenStore::build(k, n, cache_dir.map(Path::new)).map_err(err)
}

fn window(big_k: f64, theta: f64) -> Result<(WindowWeights, ExponentConfig), String> {
    let d = ExponentConfig::default();
    let cfg = ExponentConfig::new(theta, d.delta, d.eta, d.eps).map_err(err)?;
    let h = Bump::canonical(2.0, BumpKind::HWindow).map_err(err)?;
    let w = WindowWeights::new(big_k, cfg.big_g(big_k), h, true).map_err(err)?;
    Ok((w, cfg))
}

/// Normalised Hecke eigenvalues lambda_f(1..=n) for every form of weight k.
pub fn eigenform_records(k: u32, n: usize, cache_dir: Option<&str>) -> Result<Value, String> {
    let s = store(&[k], n, cache_dir)?;
    let forms = s.get(k).unwrap_or_default();
    Ok(forms
        .iter()
        .map(|f| json!({ "weight": f.weight, "l_sym2": f.l_sym2, "a1_sq": f.a1_sq, "lambda": f.lambda }))
        .collect())
}

/// Mass table rows for the forms of weight k against the canonical bump.
pub fn mass_records(k: u32, alpha: f64, n: usize, cache_dir: Option<&str>) -> Result<Value, String> {
    let (s, p) = (store(&[k], n, cache_dir)?, psi(alpha)?);
    let rows = s
        .get(k)
        .unwrap_or_default()
        .iter()
        .map(|f| mass_report(f, &p).map_err(err))
        .collect::<Result<Vec<_>, _>>()?;
    serde_json::to_value(rows).map_err(err)
}

/// Numeric diagonal with both asymptotic forms at (K, theta).
pub fn diagonal_record(big_k: f64, theta: f64, alpha: f64) -> Result<Value, String> {
    let (w, cfg) = window(big_k, theta)?;
    let p = psi(alpha)?;
    let displayed = diagonal_asymptotic(&w, &p, &p, &cfg, ConstantPower::Displayed).map_err(err)?;
    let residue = diagonal_asymptotic(&w, &p, &p, &cfg, ConstantPower::Residue).map_err(err)?;
    Ok(json!({
        "numeric": diagonal_numeric(&w, &p, &p),
        "displayed": displayed,
        "residue_form": residue,
    }))
}

/// Full variance report for the window at (K, theta).
pub fn variance_record(big_k: f64, theta: f64, alpha: f64, n: usize, cache_dir: Option<&str>) -> Result<Value, String> {
    let (w, cfg) = window(big_k, theta)?;
    let p = psi(alpha)?;
    let s = store(&w.weights(), n, cache_dir)?;
    let (report, _) = variance_report(&w, &p, &p, &s, &cfg, false).map_err(err)?;
    serde_json::to_value(report).map_err(err)
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<PyObject> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_py(py),
        Value::Number(x) => match x.as_i64() {
            Some(i) => i.into_py(py),
            None => x.as_f64().unwrap_or(f64::NAN).into_py(py),
        },
        Value::String(s) => s.into_py(py),
        Value::Array(items) => {
            let items = items.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new_bound(py, items).into_py(py)
        }
        Value::Object(map) => {
            let d = PyDict::new_bound(py);
            for (k, x) in map {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_py(py)
        }
    })
}

fn convert(py: Python<'_>, v: Result<Value, String>) -> PyResult<PyObject> {
    to_py(py, &v.map_err(PyValueError::new_err)?)
}

#[pyfunction]
#[pyo3(signature = (k, n=1000, cache_dir=None))]
fn eigenforms(py: Python<'_>, k: u32, n: usize, cache_dir: Option<&str>) -> PyResult<PyObject> {
    convert(py, eigenform_records(k, n, cache_dir))
}

#[pyfunction]
#[pyo3(signature = (k, alpha=2.0, n=1000, cache_dir=None))]
fn masses(py: Python<'_>, k: u32, alpha: f64, n: usize, cache_dir: Option<&str>) -> PyResult<PyObject> {
    convert(py, mass_records(k, alpha, n, cache_dir))
}

/// E(psi) for the canonical symmetric bump.
#[pyfunction]
#[pyo3(signature = (alpha=2.0))]
fn expected_mass(alpha: f64) -> PyResult<f64> {
    Ok(expected(&psi(alpha).map_err(PyValueError::new_err)?))
}

#[pyfunction]
fn kloosterman(a: i64, b: i64, c: u64) -> PyResult<f64> {
    qvar::expsums::kloosterman(a, b, c).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (s, alpha=2.0))]
fn mellin(s: Complex64, alpha: f64) -> PyResult<Complex64> {
    Ok(mellin_transform(&psi(alpha).map_err(PyValueError::new_err)?, s))
}

#[pyfunction]
#[pyo3(signature = (big_k, theta=0.9, alpha=2.0))]
fn diagonal(py: Python<'_>, big_k: f64, theta: f64, alpha: f64) -> PyResult<PyObject> {
    convert(py, diagonal_record(big_k, theta, alpha))
}

#[pyfunction]
#[pyo3(signature = (big_k, theta=0.9, alpha=2.0, n=1000, cache_dir=None))]
fn variance(
    py: Python<'_>,
    big_k: f64,
    theta: f64,
    alpha: f64,
    n: usize,
    cache_dir: Option<&str>,
) -> PyResult<PyObject> {
    convert(py, variance_record(big_k, theta, alpha, n, cache_dir))
}

/// Runs the command-line tool with `args` (without the program name); returns the exit code.
#[pyfunction]
fn cli(args: Vec<String>) -> i32 {
    qvar::cli::run(std::iter::once("qvar".to_string()).chain(args))
}

#[pymodule]
fn pyqvar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(eigenforms, m)?)?;
    m.add_function(wrap_pyfunction!(masses, m)?)?;
    m.add_function(wrap_pyfunction!(expected_mass, m)?)?;
    m.add_function(wrap_pyfunction!(kloosterman, m)?)?;
    m.add_function(wrap_pyfunction!(mellin, m)?)?;
    m.add_function(wrap_pyfunction!(diagonal, m)?)?;
    m.add_function(wrap_pyfunction!(variance, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
