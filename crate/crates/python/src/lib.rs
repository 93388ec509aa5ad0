//! Python bindings: models, states, the deterministic solver, gPC bases and presets.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nsvfp::diagnostics::{energy, fit_decay_rate as fit, momentum_functional};
use nsvfp::gpc::{triple_products, GpcBasis, Measure, TripleTensor};
use nsvfp::harness::{run_experiment, HarnessConfig, Preset};
use nsvfp::params::{Model, ModelParams, SpectralGrid};
use nsvfp::solver::Solver;
use nsvfp::state::{make_initial_state, InitialSpec, Profile, SimState, ZLaw};
use nsvfp::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Cfl { .. } | Error::NonFinite { .. } | Error::Node { .. } | Error::Io { .. } | Error::Plot(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn profile(name: &str) -> PyResult<Profile> {
    Ok(match name {
        "mixed" => Profile::Mixed,
        "shear" => Profile::Shear,
        "homogeneous" => Profile::Homogeneous,
        "random" => Profile::Random,
        other => return Err(PyValueError::new_err(format!("unknown profile `{other}`"))),
    })
}

fn z_law(name: &str) -> PyResult<ZLaw> {
    Ok(match name {
        "constant" => ZLaw::Constant,
        "linear" => ZLaw::Linear,
        "quadratic" => ZLaw::Quadratic,
        "exponential" => ZLaw::Exponential,
        other => return Err(PyValueError::new_err(format!("unknown z law `{other}`"))),
    })
}

fn measure(name: &str) -> PyResult<Measure> {
    match name {
        "uniform" => Ok(Measure::Uniform),
        "chebyshev" => Ok(Measure::Chebyshev),
        other => Err(PyValueError::new_err(format!("unknown measure `{other}`"))),
    }
}

/// Validated model with its spectral tables.
#[pyclass(name = "Model", module = "nsvfp_py", frozen)]
pub struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (epsilon=1.0, kappa=1.0, theta_bar=1.0, sizes=vec![1, 2], dim=1, n_x=16, n_v=8, domain_length=2.0*std::f64::consts::PI))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        epsilon: f64,
        kappa: f64,
        theta_bar: f64,
        sizes: Vec<u32>,
        dim: usize,
        n_x: usize,
        n_v: usize,
        domain_length: f64,
    ) -> PyResult<Self> {
        let params = ModelParams {
            epsilon,
            kappa,
            theta_bar,
            sizes,
            dim,
            domain_length,
        };
        Model::new(params, SpectralGrid::new(n_x, n_v))
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n_species(&self) -> usize {
        self.inner.n_species()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.modes.len()
    }

    #[pyo3(signature = (amplitude=0.05, profile="mixed", z_law="constant", z_coupling=0.0, seed=0, z=0.0))]
    fn initial_state(
        &self,
        amplitude: f64,
        profile: &str,
        z_law: &str,
        z_coupling: f64,
        seed: u64,
        z: f64,
    ) -> PyResult<PyState> {
        let spec = InitialSpec {
            amplitude,
            profile: self::profile(profile)?,
            z_law: self::z_law(z_law)?,
            z_coupling,
            seed,
        };
        make_initial_state(&spec, &self.inner, z).map(|inner| PyState { inner }).map_err(to_py)
    }

    fn zero_state(&self) -> PyState {
        PyState {
            inner: SimState::zeros(&self.inner),
        }
    }

    fn energy(&self, state: &PyState, s_order: Option<usize>) -> f64 {
        energy(&self.inner, &state.inner, s_order.unwrap_or(2)).total
    }

    fn momentum(&self, state: &PyState) -> Vec<f64> {
        momentum_functional(&self.inner, &state.inner)[..self.inner.dim()].to_vec()
    }
}

/// Spectral state `(û, f̂_i)` at one time.
#[pyclass(name = "State", module = "nsvfp_py", frozen)]
pub struct PyState {
    inner: SimState,
}

#[pymethods]
impl PyState {
    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    fn max_abs(&self) -> f64 {
        self.inner.max_abs()
    }

    fn is_finite(&self) -> bool {
        self.inner.is_finite()
    }

    fn mean_velocity(&self) -> Vec<f64> {
        self.inner.mean_velocity().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("State(t={}, max_abs={:.3e})", self.inner.time, self.inner.max_abs())
    }
}

/// Deterministic split-step solver with a fixed step.
#[pyclass(name = "Solver", module = "nsvfp_py", frozen)]
pub struct PySolver {
    inner: Solver,
}

#[pymethods]
impl PySolver {
    #[new]
    fn new(model: &PyModel, dt: f64) -> PyResult<Self> {
        Solver::new(&model.inner, dt).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Solver whose step lands exactly on `t_end`, with the number of steps.
    #[staticmethod]
    #[pyo3(signature = (model, state, t_end, dt=None))]
    fn for_horizon(model: &PyModel, state: &PyState, t_end: f64, dt: Option<f64>) -> PyResult<(Self, usize)> {
        Solver::for_horizon(&model.inner, &state.inner, t_end, dt)
            .map(|(inner, n)| (Self { inner }, n))
            .map_err(to_py)
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    fn step(&self, state: &PyState) -> PyResult<PyState> {
        self.inner.step(&state.inner).map(|inner| PyState { inner }).map_err(to_py)
    }

    /// Advances `steps` steps and returns `(final_state, [(t, E_{s,0}), ...])`.
    #[pyo3(signature = (state, steps, stride=1, s_order=2))]
    fn run(&self, state: &PyState, steps: usize, stride: usize, s_order: usize) -> PyResult<(PyState, Vec<(f64, f64)>)> {
        let model = self.inner.model().clone();
        let mut series = Vec::new();
        let last = self
            .inner
            .run(&state.inner, steps, stride, &mut |_, s| {
                series.push((s.time, energy(&model, s, s_order).total));
                Ok(())
            })
            .map_err(to_py)?;
        Ok((PyState { inner: last }, series))
    }
}

/// Orthonormal polynomial basis with its Gauss rule and triple products.
#[pyclass(name = "GpcBasis", module = "nsvfp_py", frozen)]
pub struct PyGpcBasis {
    inner: GpcBasis,
    tensor: TripleTensor,
}

#[pymethods]
impl PyGpcBasis {
    #[new]
    #[pyo3(signature = (k, measure="uniform"))]
    fn new(k: usize, measure: &str) -> PyResult<Self> {
        let inner = GpcBasis::new(self::measure(measure)?, k).map_err(to_py)?;
        let tensor = triple_products(&inner);
        Ok(Self { inner, tensor })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.inner.nodes().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn p_hat(&self) -> f64 {
        self.inner.p_hat()
    }

    fn evaluate(&self, z: f64) -> PyResult<Vec<f64>> {
        self.inner.evaluate(z).map_err(to_py)
    }

    fn orthonormality_defect(&self) -> f64 {
        self.inner.orthonormality_defect()
    }

    /// `S_jlk` with zero-based indices.
    fn triple(&self, j: usize, l: usize, k: usize) -> PyResult<f64> {
        let n = self.inner.len();
        if j >= n || l >= n || k >= n {
            return Err(PyValueError::new_err(format!("index out of range for K = {n}")));
        }
        Ok(self.tensor.get(j, l, k))
    }

    fn nonzero(&self) -> Vec<(usize, usize, usize, f64)> {
        self.tensor.nonzero().to_vec()
    }
}

/// `(lambda_hat, r2)` of `log E = c - λ t` over the second half of the series.
#[pyfunction]
fn fit_decay_rate(series: Vec<(f64, f64)>) -> PyResult<(f64, f64)> {
    fit(&series).map(|f| (f.lambda_hat, f.r2)).map_err(to_py)
}

/// Runs a preset without writing files and returns its summary as JSON text.
#[pyfunction]
#[pyo3(signature = (preset, config_toml=None))]
fn run_preset(py: Python<'_>, preset: &str, config_toml: Option<&str>) -> PyResult<String> {
    let p: Preset = preset.parse().map_err(to_py)?;
    let cfg = match config_toml {
        Some(text) => HarnessConfig::from_toml(p, text).map_err(to_py)?,
        None => HarnessConfig::preset_defaults(p),
    };
    let result = py.detach(|| run_experiment(p, &cfg)).map_err(to_py)?;
    Ok(result.summary().to_string())
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[pymodule]
fn nsvfp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PySolver>()?;
    m.add_class::<PyGpcBasis>()?;
    m.add_function(wrap_pyfunction!(fit_decay_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    Ok(())
}
