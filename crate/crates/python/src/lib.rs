//! Python bindings: build a simulated scene from a TOML configuration, then
//! evaluate, optimize and inspect solutions on it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rotaris::ao::{initialize, AoConfig, DeltaMethod};
use rotaris::config::{default_config_toml, parse_config};
use rotaris::harness::{run_experiment, trial_seeds, ExperimentConfig, TrialStatus};
use rotaris::orientation::{exhaustive_delta, pso_delta, DeltaObjective};
use rotaris::rate::user_rates;
use rotaris::scene::dbm_to_watts;
use rotaris::surrogate::build_mm_coefficients;
use rotaris::{generate_channels, generate_scene, objective, ChannelRealization, Error, Scene};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(_) | Error::Dimension(_) | Error::Toml(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn load(config: Option<&str>) -> PyResult<ExperimentConfig> {
    match config {
        Some(text) => parse_config(text).map_err(to_py),
        None => Ok(ExperimentConfig::default()),
    }
}

fn method(name: &str) -> PyResult<DeltaMethod> {
    DeltaMethod::parse(name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown method {name:?}")))
}

/// Precoder, RIS phases and rotation angle.
#[pyclass(name = "Solution", from_py_object)]
#[derive(Clone)]
struct PySolution {
    inner: rotaris::Solution,
}

#[pymethods]
impl PySolution {
    /// Build a solution from an N x G nested list `f`, a length-M list `e`
    /// and a rotation angle in radians.
    #[new]
    #[pyo3(signature = (f, e, delta = 0.0))]
    fn new(f: Vec<Vec<Complex64>>, e: Vec<Complex64>, delta: f64) -> PyResult<Self> {
        let rows = f.len();
        let cols = f.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || f.iter().any(|r| r.len() != cols) {
            return Err(PyValueError::new_err(
                "f must be a non-empty rectangular N x G list",
            ));
        }
        let f = DMatrix::from_fn(rows, cols, |r, c| f[r][c]);
        Ok(Self {
            inner: rotaris::Solution {
                f,
                e: DVector::from_vec(e),
                delta,
            },
        })
    }

    /// Precoding matrix as an N x G nested list.
    #[getter]
    fn f(&self) -> Vec<Vec<Complex64>> {
        let f = &self.inner.f;
        (0..f.nrows())
            .map(|r| f.row(r).iter().copied().collect())
            .collect()
    }

    #[getter]
    fn e(&self) -> Vec<Complex64> {
        self.inner.e.iter().copied().collect()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[setter]
    fn set_delta(&mut self, delta: f64) {
        self.inner.delta = delta;
    }

    /// Total transmit power `trace(F^H F)` in watts.
    fn transmit_power(&self) -> f64 {
        self.inner.transmit_power()
    }

    fn is_feasible(&self, p_max_watts: f64) -> bool {
        self.inner.is_feasible(p_max_watts)
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(N={}, G={}, M={}, delta={:.6})",
            self.inner.f.nrows(),
            self.inner.f.ncols(),
            self.inner.e.len(),
            self.inner.delta
        )
    }
}

/// Result of one alternating-optimization run.
#[pyclass(name = "AoResult", skip_from_py_object)]
struct PyAoResult {
    #[pyo3(get)]
    solution: PySolution,
    /// True objective after each iteration, starting with the initial point.
    #[pyo3(get)]
    objectives: Vec<f64>,
    #[pyo3(get)]
    deltas: Vec<f64>,
    #[pyo3(get)]
    best_objective: f64,
    #[pyo3(get)]
    best_iteration: usize,
    #[pyo3(get)]
    converged: bool,
}

#[pymethods]
impl PyAoResult {
    fn __repr__(&self) -> String {
        format!(
            "AoResult(best_objective={:.6}, iterations={}, converged={})",
            self.best_objective,
            self.objectives.len().saturating_sub(1),
            self.converged
        )
    }
}

/// One random scene with its channel realization.
#[pyclass(name = "Simulation", skip_from_py_object)]
struct PySimulation {
    config: ExperimentConfig,
    scene: Scene,
    channels: ChannelRealization,
    ao_seed: u64,
}

impl PySimulation {
    fn ao_config(&self, method_name: &str, p_max_dbm: Option<f64>) -> PyResult<AoConfig> {
        let mut cfg = self.config.ao.clone();
        cfg.delta_method = method(method_name)?;
        if let Some(p) = p_max_dbm {
            cfg.p_max_watts = dbm_to_watts(p);
        }
        cfg.validate().map_err(to_py)?;
        Ok(cfg)
    }
}

#[pymethods]
impl PySimulation {
    /// Draw the scene and channels of trial `seed` from a TOML configuration
    /// (defaults when omitted), exactly as the experiment runner does.
    #[new]
    #[pyo3(signature = (config = None, seed = 0))]
    fn new(config: Option<&str>, seed: u64) -> PyResult<Self> {
        let config = load(config)?;
        let (scene_seed, channel_seed, ao_seed) = trial_seeds(seed);
        let scene = generate_scene(&config.scene, scene_seed).map_err(to_py)?;
        let channels = generate_channels(&scene, channel_seed).map_err(to_py)?;
        Ok(Self {
            config,
            scene,
            channels,
            ao_seed,
        })
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.scene.num_users()
    }

    #[getter]
    fn num_groups(&self) -> usize {
        self.scene.num_groups
    }

    #[getter]
    fn bs_antennas(&self) -> usize {
        self.scene.bs_antennas
    }

    #[getter]
    fn ris_elements(&self) -> usize {
        self.scene.ris_elements()
    }

    /// Zero-based group index of every user.
    #[getter]
    fn group_of_user(&self) -> Vec<usize> {
        self.scene.group_of_user.clone()
    }

    #[getter]
    fn user_positions(&self) -> Vec<[f64; 3]> {
        self.scene.user_positions.clone()
    }

    /// The seeded starting point used by `run_ao`.
    #[pyo3(signature = (p_max_dbm = None))]
    fn initial_solution(&self, p_max_dbm: Option<f64>) -> PyResult<PySolution> {
        let cfg = self.ao_config("fixed", p_max_dbm)?;
        Ok(PySolution {
            inner: initialize(&self.scene, &self.channels, &cfg, self.ao_seed),
        })
    }

    fn check(&self, sol: &PySolution) -> PyResult<()> {
        let (n, g, m) = (
            self.scene.bs_antennas,
            self.scene.num_groups,
            self.scene.ris_elements(),
        );
        if sol.inner.f.shape() != (n, g) || sol.inner.e.len() != m {
            return Err(PyValueError::new_err(format!(
                "solution must have f of shape ({n}, {g}) and {m} phases"
            )));
        }
        Ok(())
    }

    /// Per-user achievable rates in bits/s/Hz.
    fn user_rates(&self, sol: &PySolution) -> PyResult<Vec<f64>> {
        self.check(sol)?;
        Ok(user_rates(&sol.inner, &self.scene, &self.channels))
    }

    /// Sum over groups of the minimum member rate.
    fn objective(&self, sol: &PySolution) -> PyResult<f64> {
        self.check(sol)?;
        Ok(objective(&sol.inner, &self.scene, &self.channels))
    }

    /// Run the alternating optimization with `method` in
    /// {"fixed", "pso", "exhaustive"}.
    #[pyo3(signature = (method = "exhaustive", p_max_dbm = None, max_outer_iterations = None, grid_points = None))]
    fn run_ao(
        &self,
        py: Python<'_>,
        method: &str,
        p_max_dbm: Option<f64>,
        max_outer_iterations: Option<usize>,
        grid_points: Option<usize>,
    ) -> PyResult<PyAoResult> {
        let mut cfg = self.ao_config(method, p_max_dbm)?;
        if let Some(n) = max_outer_iterations {
            cfg.max_outer_iterations = n;
        }
        if let Some(d) = grid_points {
            cfg.grid_points = d;
        }
        cfg.validate().map_err(to_py)?;
        let (sol, trace) = py
            .detach(|| rotaris::run_ao(&self.scene, &self.channels, &cfg, self.ao_seed))
            .map_err(to_py)?;
        Ok(PyAoResult {
            solution: PySolution { inner: sol },
            objectives: trace.objectives(),
            deltas: trace.records.iter().map(|r| r.delta).collect(),
            best_objective: trace.best_objective,
            best_iteration: trace.best_iteration,
            converged: trace.converged,
        })
    }

    /// Optimize the rotation angle alone, with the precoder and phases of
    /// `sol` frozen, on the orientation surrogate built at `sol`. Returns
    /// `(delta, surrogate_value)`.
    #[pyo3(signature = (sol, method = "exhaustive", grid_points = None, seed = 0))]
    fn best_delta(
        &self,
        sol: &PySolution,
        method: &str,
        grid_points: Option<usize>,
        seed: u64,
    ) -> PyResult<(f64, f64)> {
        self.check(sol)?;
        let coeffs = build_mm_coefficients(&sol.inner, &self.scene, &self.channels);
        let dobj = DeltaObjective::from_coefficients(&coeffs);
        match self::method(method)? {
            DeltaMethod::Exhaustive => {
                exhaustive_delta(&dobj, grid_points.unwrap_or(self.config.ao.grid_points))
                    .map_err(to_py)
            }
            DeltaMethod::Pso => pso_delta(&dobj, self.config.ao.pso, seed)
                .map(|o| (o.delta, o.value))
                .map_err(to_py),
            DeltaMethod::Fixed => Ok((sol.inner.delta, dobj.evaluate(sol.inner.delta))),
        }
    }
}

/// The default experiment configuration as TOML text.
#[pyfunction]
fn default_config() -> PyResult<String> {
    default_config_toml().map_err(to_py)
}

/// Run a full experiment from TOML text and return one dict per
/// (trial, arm, power) run.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn run_trials(py: Python<'_>, config: Option<&str>) -> PyResult<Vec<Py<PyAny>>> {
    let cfg = load(config)?;
    let exp = py.detach(|| run_experiment(&cfg)).map_err(to_py)?;
    exp.records
        .iter()
        .map(|r| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("seed", r.seed)?;
            d.set_item("arm", r.arm.as_str())?;
            d.set_item("p_max_dbm", r.p_max_dbm)?;
            d.set_item("objective", r.objective)?;
            d.set_item("group_min_rates", r.group_min_rates.clone())?;
            d.set_item("iterations", r.iterations)?;
            d.set_item("delta", r.delta)?;
            d.set_item("wall_ms", r.wall_ms)?;
            let status = match &r.status {
                TrialStatus::Ok => "ok".to_string(),
                TrialStatus::Failed(msg) => format!("failed: {msg}"),
            };
            d.set_item("status", status)?;
            Ok(d.into_any().unbind())
        })
        .collect()
}

#[pymodule]
fn pyrotaris(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySolution>()?;
    m.add_class::<PyAoResult>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_trials, m)?)?;
    Ok(())
}
