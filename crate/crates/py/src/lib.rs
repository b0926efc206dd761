//! Python bindings. Structured results come back as plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use vilab::criterion::{classify_sequence_with, CandidateSequence, CriterionConfig};
use vilab::fem::{contact, heat};
use vilab::linalg::Matrix;
use vilab::studies::{self, StudyConfig};
use vilab::{ConvexFunctional, ConvexSet, Error, MonotoneOperator, ResidualMode, SolveConfig, SolveMethod, VIProblem};

fn err(e: Error) -> PyErr {
    match e {
        Error::MaxIterExceeded { .. } | Error::SmallnessViolated { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn method(name: &str) -> PyResult<SolveMethod> {
    match name {
        "fixed_point" => Ok(SolveMethod::FixedPoint),
        "coordinate_descent" => Ok(SolveMethod::CoordinateDescent),
        "auto" => Ok(SolveMethod::Auto),
        other => Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    }
}

fn mode(name: &str) -> PyResult<ResidualMode> {
    match name {
        "one_plus_norm" => Ok(ResidualMode::OnePlusNorm),
        "norm" => Ok(ResidualMode::Norm),
        other => Err(PyValueError::new_err(format!("unknown residual mode {other:?}"))),
    }
}

/// Variational inequality `(A, j, K, f)` on ℝⁿ.
#[pyclass(name = "Problem", module = "vilab")]
#[derive(Clone)]
struct PyProblem {
    inner: VIProblem,
}

#[pymethods]
impl PyProblem {
    /// Linear operator `matrix`, box `[lower, upper]` (None for unbounded),
    /// and `j(v) = Σ w_k max(v_{i_k}, 0)` from `j_indices`, `j_weights`.
    #[new]
    #[pyo3(signature = (matrix, rhs, lower=None, upper=None, j_indices=None, j_weights=None))]
    fn new(
        matrix: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        lower: Option<Vec<Option<f64>>>,
        upper: Option<Vec<Option<f64>>>,
        j_indices: Option<Vec<usize>>,
        j_weights: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let n = rhs.len();
        let op = MonotoneOperator::linear(Matrix::from_rows(&matrix).map_err(err)?).map_err(err)?;
        let set = if lower.is_none() && upper.is_none() {
            ConvexSet::whole_space()
        } else {
            let fill = |v: Option<Vec<Option<f64>>>, inf: f64| -> Vec<f64> {
                v.map_or(vec![inf; n], |v| v.into_iter().map(|x| x.unwrap_or(inf)).collect())
            };
            ConvexSet::boxed(fill(lower, f64::NEG_INFINITY), fill(upper, f64::INFINITY)).map_err(err)?
        };
        let j = match (j_indices, j_weights) {
            (None, None) => ConvexFunctional::Zero,
            (Some(i), Some(w)) => ConvexFunctional::positive_part(i, w).map_err(err)?,
            _ => return Err(PyValueError::new_err("j_indices and j_weights go together")),
        };
        Ok(Self {
            inner: VIProblem::new(op, j, set, rhs).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: VIProblem::from_json(text).map_err(err)?,
        })
    }

    /// `A = I`, `j = 0`, `K = [lo, hi]` in one dimension.
    #[staticmethod]
    fn scalar_interval(lo: f64, hi: f64, f: f64) -> Self {
        Self {
            inner: vilab::problem::scalar_interval_problem(lo, hi, f),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Certified strong monotonicity constant.
    #[getter]
    fn m(&self) -> f64 {
        self.inner.m()
    }

    /// Certified Lipschitz constant.
    #[getter]
    fn big_m(&self) -> f64 {
        self.inner.big_m()
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.project(&x).map_err(err)
    }

    fn distance(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.distance(&x).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Problem(dim={}, m={:.4e}, M={:.4e})", self.inner.dim(), self.inner.m(), self.inner.big_m())
    }
}

/// Solves the inequality; returns the solve report as a dict.
#[pyfunction]
#[pyo3(signature = (problem, method="auto", tol=1e-10, max_iter=200_000, initial=None))]
fn solve(
    py: Python<'_>,
    problem: &PyProblem,
    method: &str,
    tol: f64,
    max_iter: usize,
    initial: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let config = SolveConfig {
        tol,
        max_iter,
        method: self::method(method)?,
        initial,
        ..SolveConfig::default()
    };
    let report = vilab::solve_vi(&problem.inner, &config).map_err(err)?;
    to_py(py, &report)
}

/// Certified lower estimate of the smallest residual slack at `u`.
#[pyfunction]
#[pyo3(signature = (problem, u, mode="one_plus_norm", probe_budget=16))]
fn epsilon_residual(problem: &PyProblem, u: Vec<f64>, mode: &str, probe_budget: usize) -> PyResult<f64> {
    vilab::epsilon_residual(&problem.inner, &u, self::mode(mode)?, probe_budget).map_err(err)
}

/// Criterion report (rows, boundedness, flags) for a candidate sequence.
#[pyfunction]
#[pyo3(signature = (problem, items, probe_budget=16, seed=0x5eed))]
fn classify(py: Python<'_>, problem: &PyProblem, items: Vec<Vec<f64>>, probe_budget: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let seq = CandidateSequence::new("python", items).map_err(err)?;
    let config = CriterionConfig {
        probe_budget,
        seed,
        ..CriterionConfig::default()
    };
    let report = classify_sequence_with(&problem.inner, &seq, &config).map_err(err)?;
    to_py(py, &report)
}

/// Golden suite text, one line per check.
#[pyfunction]
#[pyo3(signature = (seed=0x5eed))]
fn selftest(seed: u64) -> PyResult<String> {
    Ok(vilab::selftest::run_golden_suite(seed).map_err(err)?.render())
}

/// Scalar penalty ladder `λ = 2⁻ⁿ` on `K = [0, 1]`, `f = 2`.
#[pyfunction]
fn scalar_penalty_study(py: Python<'_>) -> PyResult<Py<PyAny>> {
    let table = studies::run_study(&studies::scalar_penalty_ladder(), &StudyConfig::default()).map_err(err)?;
    to_py(py, &table)
}

/// Penalized heat ladder `λ = 10⁻ⁿ`; returns the table and Γ3 traces.
#[pyfunction]
#[pyo3(signature = (dim=1, nx=64, ny=16, g=2.0, q=0.0, b=0.0))]
fn heat_penalty_study(py: Python<'_>, dim: usize, nx: usize, ny: usize, g: f64, q: f64, b: f64) -> PyResult<Py<PyAny>> {
    let mesh = match dim {
        1 => heat::unit_interval(nx),
        2 => heat::unit_square(nx, ny),
        d => return Err(PyValueError::new_err(format!("dimension {d} not supported"))),
    }
    .map_err(err)?;
    let model = heat::assemble_heat_uniform(&mesh, g, q, b).map_err(err)?;
    let study = heat::run_heat_penalty_study(&model, &heat::default_heat_lambdas(), &StudyConfig::default()).map_err(err)?;
    to_py(py, &study)
}

/// Frictional contact ladder on the standard rectangle with indices
/// `1, 2, 4, …, 2^last`.
#[pyfunction]
#[pyo3(signature = (nx=4, ny=2, mu0=0.05, last=12))]
fn contact_study(py: Python<'_>, nx: usize, ny: usize, mu0: f64, last: u32) -> PyResult<Py<PyAny>> {
    let data = contact::ContactProblemData::standard(nx, ny).map_err(err)?;
    let model = contact::assemble_model(&data).map_err(err)?;
    let ladder = contact::harmonic_ladder(&data.base, mu0, last);
    let study = contact::run_friction_ladder_study(&model, &ladder, &StudyConfig::default(), 1e-10).map_err(err)?;
    to_py(py, &study)
}

#[pymodule]
#[pyo3(name = "vilab")]
fn vilab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_residual, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add_function(wrap_pyfunction!(scalar_penalty_study, m)?)?;
    m.add_function(wrap_pyfunction!(heat_penalty_study, m)?)?;
    m.add_function(wrap_pyfunction!(contact_study, m)?)?;
    Ok(())
}
