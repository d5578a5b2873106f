//! Python bindings for `qlrom`.
//!
//! Matrices cross the boundary as lists of rows and vectors as flat lists, so
//! the module has no dependency on numpy (numpy arrays are accepted anywhere a
//! sequence is).

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use qlrom::cli::{exit_code, PipelineConfig};
use qlrom::rom::{simulate_rom, IntegratorOptions};
use qlrom::TimeGrid;

create_exception!(_qlrom, QlromError, PyException, "Raised with `(message, exit_code)` as its arguments.");

fn to_py(err: qlrom::Error) -> PyErr {
    QlromError::new_err((err.to_string(), exit_code(&err)))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(to_py(qlrom::Error::Dimension("ragged matrix rows".into())));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Columns of a `dim × len` matrix as a list of snapshots.
fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// ẋ = A x + H (x ⊗ x) + C
#[pyclass(module = "qlrom._qlrom", frozen)]
struct QuadraticOperators {
    inner: qlrom::QuadraticOperators,
}

#[pymethods]
impl QuadraticOperators {
    #[new]
    fn new(a: Vec<Vec<f64>>, h: Vec<Vec<f64>>, c: Vec<f64>) -> PyResult<Self> {
        let inner = qlrom::QuadraticOperators::new(matrix(a)?, matrix(h)?, DVector::from_vec(c)).map_err(to_py)?;
        Ok(QuadraticOperators { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows(self.inner.a())
    }

    /// The symmetrized quadratic operator.
    #[getter]
    fn h(&self) -> Vec<Vec<f64>> {
        rows(self.inner.h())
    }

    #[getter]
    fn c(&self) -> Vec<f64> {
        self.inner.c().iter().copied().collect()
    }

    fn rhs(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let out = self.inner.rhs(&DVector::from_vec(x)).map_err(to_py)?;
        Ok(out.iter().copied().collect())
    }

    fn jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        if x.len() != self.inner.dim() {
            let msg = format!("state has {} entries, expected {}", x.len(), self.inner.dim());
            return Err(to_py(qlrom::Error::Dimension(msg)));
        }
        Ok(rows(&self.inner.jacobian(&DVector::from_vec(x))))
    }

    fn max_real_eigenvalue(&self) -> PyResult<f64> {
        self.inner.max_real_eigenvalue().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("QuadraticOperators(dim={})", self.inner.dim())
    }
}

/// A fitted model loaded from the `model/` directory of a run.
#[pyclass(module = "qlrom._qlrom", frozen)]
struct RomModel {
    inner: qlrom::RomModel,
}

#[pymethods]
impl RomModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(RomModel {
            inner: qlrom::RomModel::load(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.basis().rank()
    }

    #[getter]
    fn full_dim(&self) -> usize {
        self.inner.basis().full_dim()
    }

    #[getter]
    fn operators(&self) -> QuadraticOperators {
        QuadraticOperators {
            inner: self.inner.ops().clone(),
        }
    }

    /// The orthonormal basis as a `full_dim × rank` list of rows.
    #[getter]
    fn basis(&self) -> Vec<Vec<f64>> {
        rows(self.inner.basis().v())
    }

    fn reduce(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let r = self.inner.reduce(&DVector::from_vec(x)).map_err(to_py)?;
        Ok(r.iter().copied().collect())
    }

    /// Integrate from the full initial state `x0` over `times`. Returns the
    /// reduced and reconstructed trajectories as lists of snapshots, plus the
    /// divergence time if the integration blew up.
    #[allow(clippy::type_complexity)]
    fn simulate(&self, x0: Vec<f64>, times: Vec<f64>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Option<f64>)> {
        let grid = TimeGrid::new(times).map_err(to_py)?;
        let (reduced, full) = simulate_rom(&self.inner, &DVector::from_vec(x0), &grid, &IntegratorOptions::default())
            .map_err(to_py)?;
        let diverged = full.diverged().map(|(t, _)| t);
        Ok((columns(reduced.values()), columns(full.values()), diverged))
    }

    fn __repr__(&self) -> String {
        format!("RomModel(rank={}, full_dim={})", self.rank(), self.full_dim())
    }
}

/// Run every stage for a JSON configuration and return `report.json` as a string.
#[pyfunction]
fn run_pipeline(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg: PipelineConfig = serde_json::from_str(config_json).map_err(|e| to_py(e.into()))?;
    let report = py.detach(|| qlrom::cli::run_pipeline(&cfg)).map_err(to_py)?;
    serde_json::to_string_pretty(&report).map_err(|e| to_py(e.into()))
}

/// The command-line entry point; returns the exit code.
#[pyfunction]
fn main(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| qlrom::cli::main_with_args(std::iter::once("qlrom".to_string()).chain(args)))
}

#[pyfunction]
fn cumulative_energy(singular_values: Vec<f64>) -> Vec<f64> {
    qlrom::pod::cumulative_energy(&singular_values)
}

/// Smallest rank whose retained energy reaches `theta`.
#[pyfunction]
fn energy_rank(singular_values: Vec<f64>, theta: f64) -> usize {
    qlrom::pod::energy_rank(&singular_values, theta)
}

#[pymodule]
fn _qlrom(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("QlromError", m.py().get_type::<QlromError>())?;
    m.add_class::<QuadraticOperators>()?;
    m.add_class::<RomModel>()?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    m.add_function(wrap_pyfunction!(cumulative_energy, m)?)?;
    m.add_function(wrap_pyfunction!(energy_rank, m)?)?;
    Ok(())
}
