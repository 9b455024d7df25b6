//! Python bindings: models, runs, comparisons and the self-test suite.

use std::f64::consts::PI;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use whitham_lab::config::RunConfig;
use whitham_lab::diagnostics::{coercivity_check, EnergyReport};
use whitham_lab::harness::{exact_linear_solution, model_compare};
use whitham_lab::model::{Model as CoreModel, ModelParams, State};
use whitham_lab::multiplier::{grid_sample_range, preset, validate_admissible, PRESETS};
use whitham_lab::spectral::SpectralGrid;
use whitham_lab::stepper::{run, RunControl, RunError, StepperConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_err(e: RunError) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn reports_dict<'py>(py: Python<'py>, reports: &[EnergyReport]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (i, name) in EnergyReport::COLUMNS.iter().enumerate() {
        let col: Vec<f64> = reports.iter().map(|r| r.values()[i]).collect();
        d.set_item(*name, col)?;
    }
    Ok(d)
}

fn state_dict<'py>(py: Python<'py>, s: &State) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("time", s.time)?;
    d.set_item("zeta", s.zeta.clone())?;
    d.set_item("v", s.v.clone())?;
    Ok(d)
}

/// A Whitham-Boussinesq model on a periodic grid.
#[pyclass(frozen)]
struct Model {
    inner: CoreModel,
}

impl Model {
    fn state(&self, zeta: Vec<f64>, v: Vec<Vec<f64>>) -> PyResult<State> {
        State::new(self.inner.grid().clone(), zeta, v).map_err(value_err)
    }
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (name, n, epsilon, mu = 1.0, dim = 1, length = 2.0 * PI, h_min = 0.5))]
    fn new(name: &str, n: usize, epsilon: f64, mu: f64, dim: usize, length: f64, h_min: f64) -> PyResult<Self> {
        let (pair, _) = preset(name, mu).map_err(value_err)?;
        let grid = SpectralGrid::shared(dim, n, length).map_err(value_err)?;
        let params = ModelParams::new(&pair, epsilon, mu, h_min).map_err(value_err)?;
        let inner = CoreModel::new(grid, params).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Grid coordinates along `axis`.
    #[pyo3(signature = (axis = 0))]
    fn coordinates(&self, axis: usize) -> Vec<f64> {
        self.inner.grid().coordinates(axis)
    }

    fn g1_table(&self) -> Vec<f64> {
        self.inner.g1_table().to_vec()
    }

    fn g2_table(&self) -> Vec<f64> {
        self.inner.g2_table().to_vec()
    }

    /// Time derivative of the nonlinear system; returns `(zeta_t, v_t)`.
    fn rhs(&self, zeta: Vec<f64>, v: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let out = self.inner.rhs(&self.state(zeta, v)?).map_err(value_err)?;
        Ok((out.zeta, out.v))
    }

    #[pyo3(signature = (zeta, v, s = 0.0))]
    fn x_norm(&self, zeta: Vec<f64>, v: Vec<Vec<f64>>, s: f64) -> PyResult<f64> {
        Ok(self.inner.x_norm(&self.state(zeta, v)?, s))
    }

    /// `(S_0(U_) w, w)` with frozen state `U_ = (frozen_zeta, frozen_v)`.
    fn quadratic_form(
        &self,
        frozen_zeta: Vec<f64>,
        frozen_v: Vec<Vec<f64>>,
        zeta: Vec<f64>,
        v: Vec<Vec<f64>>,
    ) -> PyResult<f64> {
        let frozen = self.state(frozen_zeta, frozen_v)?;
        self.inner.quadratic_form(&frozen, &self.state(zeta, v)?).map_err(value_err)
    }

    /// Worst coercivity margin over random frozen states.
    #[pyo3(signature = (n_trials = 100, seed = 0))]
    fn coercivity(&self, n_trials: usize, seed: u64) -> f64 {
        coercivity_check(&self.inner, n_trials, seed)
    }

    /// Integrate with RK4 to `t_end`; returns the final state and diagnostics.
    #[pyo3(signature = (zeta, v, t_end, dt = None, cfl = 0.5))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        zeta: Vec<f64>,
        v: Vec<Vec<f64>>,
        t_end: f64,
        dt: Option<f64>,
        cfl: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let u0 = self.state(zeta, v)?;
        let cfg = StepperConfig {
            cfl,
            dt_override: dt,
            ..StepperConfig::default()
        }
        .with_t_end(t_end);
        let control = RunControl::for_dim(self.inner.grid().dim());
        let traj = py.detach(|| run(&self.inner, &u0, &cfg, &control)).map_err(run_err)?;
        let d = PyDict::new(py);
        d.set_item("final", state_dict(py, traj.last())?)?;
        d.set_item("diagnostics", reports_dict(py, &traj.reports)?)?;
        d.set_item("steps", traj.steps)?;
        d.set_item("dt", traj.dt)?;
        Ok(d)
    }

    /// Exact solution of the linear (`epsilon = 0`) flow at time `t`.
    fn exact_linear(&self, zeta: Vec<f64>, v: Vec<Vec<f64>>, t: f64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let out = exact_linear_solution(&self.inner, &self.state(zeta, v)?, t);
        Ok((out.zeta, out.v))
    }
}

/// Names of the built-in multiplier pairs.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    PRESETS.to_vec()
}

/// Whether a preset passes the admissibility checks at resolution `n`.
#[pyfunction]
#[pyo3(signature = (name, n = 64, mu = 1.0))]
fn is_admissible(name: &str, n: usize, mu: f64) -> PyResult<bool> {
    let (pair, _) = preset(name, mu).map_err(value_err)?;
    let grid = SpectralGrid::new(1, n, 2.0 * PI).map_err(value_err)?;
    Ok(validate_admissible(&pair, grid_sample_range(&grid), 256).passed())
}

/// Validate a JSON run configuration; returns the warnings.
#[pyfunction]
fn validate_config(json: &str) -> PyResult<Vec<String>> {
    let cfg = RunConfig::from_json(json).map_err(value_err)?;
    Ok(cfg.validate().map_err(value_err)?.warnings)
}

/// Run a JSON run configuration in memory.
#[pyfunction]
fn run_config<'py>(py: Python<'py>, json: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RunConfig::from_json(json).map_err(value_err)?;
    cfg.validate().map_err(value_err)?;
    let model = cfg.build_model().map_err(value_err)?;
    let init = cfg.initial_state(&model).map_err(value_err)?;
    let traj = py
        .detach(|| run(&model, &init, &cfg.stepper_config(), &cfg.run_control()))
        .map_err(run_err)?;
    let d = PyDict::new(py);
    d.set_item("final", state_dict(py, traj.last())?)?;
    d.set_item("diagnostics", reports_dict(py, &traj.reports)?)?;
    Ok(d)
}

/// Compare two JSON configurations up to `t_end`.
#[pyfunction]
fn compare<'py>(py: Python<'py>, json_a: &str, json_b: &str, t_end: f64) -> PyResult<Bound<'py, PyDict>> {
    let a = RunConfig::from_json(json_a).map_err(value_err)?;
    let b = RunConfig::from_json(json_b).map_err(value_err)?;
    let r = py
        .detach(|| model_compare(&a, &b, t_end))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("times", r.times)?;
    d.set_item("error", r.error)?;
    d.set_item("residual", r.residual)?;
    d.set_item("c_hat", r.c_hat)?;
    d.set_item("bound_holds", r.bound_holds)?;
    Ok(d)
}

/// Run the built-in invariant checks; returns `(name, passed, detail)` triples.
#[pyfunction]
fn selftest(py: Python<'_>) -> Vec<(&'static str, bool, String)> {
    py.detach(whitham_lab::selftest::run_all)
        .into_iter()
        .map(|c| match c.outcome {
            Ok(d) => (c.name, true, d),
            Err(d) => (c.name, false, d),
        })
        .collect()
}

#[pymodule]
fn pywhitham(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(is_admissible, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
