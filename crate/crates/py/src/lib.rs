use num::complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use revsle_core::cft::{self, Sector};
use revsle_core::driving::{self, DrivingPath, TimeGrid};
use revsle_core::loewner::{self, Direction, RadialControl, RadialStatus};
use revsle_core::montecarlo::{self, InverseConfig, McConfig};
use revsle_core::observables::{self, ExponentRoots};
use revsle_core::virasoro;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_sector(sector: &str) -> PyResult<Sector> {
    sector.parse().map_err(value_error)
}

fn parse_kappa(kappa: &str) -> PyResult<num::BigRational> {
    revsle_core::parse_rational(kappa).ok_or_else(|| value_error(format!("cannot parse kappa {kappa:?}")))
}

#[pyclass(name = "DrivingPath", module = "revsle", frozen)]
struct PyDrivingPath {
    inner: DrivingPath,
}

#[pymethods]
impl PyDrivingPath {
    #[staticmethod]
    fn explicit(horizon: f64, kappa: f64, values: Vec<f64>) -> PyResult<Self> {
        let n = values.len().saturating_sub(1).max(1);
        let grid = TimeGrid::new(horizon, n).map_err(value_error)?;
        let inner = DrivingPath::explicit(grid, kappa, values).map_err(value_error)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: DrivingPath::from_json(text).map_err(value_error)?,
        })
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.grid().horizon()
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.grid().n_steps()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn times(&self) -> Vec<f64> {
        self.inner.grid().times().collect()
    }

    fn reversed(&self) -> Self {
        Self {
            inner: driving::reverse_driving(&self.inner),
        }
    }

    fn quadratic_variation(&self) -> f64 {
        driving::quadratic_variation(&self.inner)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(value_error)
    }

    fn __len__(&self) -> usize {
        self.inner.values().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "DrivingPath(kappa={}, horizon={}, n_steps={}, seed={})",
            self.inner.kappa(),
            self.inner.grid().horizon(),
            self.inner.grid().n_steps(),
            self.inner.seed()
        )
    }
}

#[pyfunction]
fn sample_brownian(horizon: f64, n_steps: usize, kappa: f64, seed: u64) -> PyResult<PyDrivingPath> {
    let grid = TimeGrid::new(horizon, n_steps).map_err(value_error)?;
    let inner = driving::sample_brownian(grid, kappa, seed).map_err(value_error)?;
    Ok(PyDrivingPath { inner })
}

#[pyclass(name = "LoewnerEvolution", module = "revsle", frozen)]
struct PyLoewnerEvolution {
    inner: loewner::LoewnerEvolution,
}

#[pymethods]
impl PyLoewnerEvolution {
    #[new]
    #[pyo3(signature = (path, direction = "forward"))]
    fn new(path: &PyDrivingPath, direction: &str) -> PyResult<Self> {
        let inner = match direction {
            "forward" => loewner::evolve_forward(&path.inner),
            "backward" => loewner::evolve_backward(&path.inner),
            other => return Err(value_error(format!("unknown direction {other:?}"))),
        };
        Ok(Self { inner })
    }

    #[getter]
    fn direction(&self) -> &'static str {
        match self.inner.direction() {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[pyo3(signature = (z, up_to = None))]
    fn apply(&self, z: Complex64, up_to: Option<usize>) -> PyResult<Complex64> {
        let k = up_to.unwrap_or(self.inner.len());
        Ok(self.inner.evaluate(z, k).map_err(value_error)?.image)
    }

    #[pyo3(signature = (z, up_to = None))]
    fn derivative(&self, z: Complex64, up_to: Option<usize>) -> PyResult<Complex64> {
        let k = up_to.unwrap_or(self.inner.len());
        Ok(self.inner.evaluate(z, k).map_err(value_error)?.derivative)
    }

    #[pyo3(signature = (w, up_to = None))]
    fn invert(&self, w: Complex64, up_to: Option<usize>) -> PyResult<Complex64> {
        let k = up_to.unwrap_or(self.inner.len());
        self.inner.invert_upto(w, k).map_err(value_error)
    }

    /// Tip samples; `None` where the tip could not be resolved.
    #[pyo3(signature = (indices = None))]
    fn trace(&self, indices: Option<Vec<usize>>) -> PyResult<Vec<Option<Complex64>>> {
        let indices = indices.unwrap_or_else(|| (0..=self.inner.len()).collect());
        let tips = loewner::trace(&self.inner, &indices).map_err(value_error)?;
        Ok(tips.into_iter().map(Result::ok).collect())
    }
}

/// States of the whole-plane flow and the final status name.
#[pyfunction]
#[pyo3(signature = (path, z, eps_sing = None))]
fn evolve_wholeplane(path: &PyDrivingPath, z: Complex64, eps_sing: Option<f64>) -> PyResult<(Vec<Complex64>, String)> {
    let mut control = RadialControl::default();
    if let Some(eps) = eps_sing {
        control.eps_sing = eps;
    }
    let evo = loewner::evolve_wholeplane(&path.inner, z, control).map_err(value_error)?;
    let status = match evo.status {
        RadialStatus::Completed => "completed",
        RadialStatus::SingularityHalt { .. } => "singularity_halt",
        RadialStatus::LeftHalfPlane { .. } => "left_half_plane",
        RadialStatus::StepBudget { .. } => "step_budget",
    };
    Ok((evo.states, status.to_string()))
}

#[pyfunction]
#[pyo3(signature = (kappa, sector = "liouville"))]
fn central_charge(kappa: f64, sector: &str) -> PyResult<f64> {
    Ok(cft::params_from_kappa(kappa, parse_sector(sector)?)
        .map_err(value_error)?
        .c)
}

#[pyfunction]
#[pyo3(signature = (kappa, r, s, sector = "liouville"))]
fn kac_weight(kappa: f64, r: u32, s: u32, sector: &str) -> PyResult<f64> {
    let params = cft::params_from_kappa(kappa, parse_sector(sector)?).map_err(value_error)?;
    cft::kac_dimension(&params, r, s).map_err(value_error)
}

/// `(c_L, c_M, c_L + c_M)` as exact fraction strings.
#[pyfunction]
fn coupling_check(kappa: &str) -> PyResult<(String, String, String)> {
    let (l, m, sum) = cft::coupling_check_exact(&parse_kappa(kappa)?).map_err(value_error)?;
    Ok((l.to_string(), m.to_string(), sum.to_string()))
}

#[pyfunction]
#[pyo3(signature = (kappa, sector = "liouville"))]
fn virasoro_report<'py>(py: Python<'py>, kappa: &str, sector: &str) -> PyResult<Bound<'py, PyDict>> {
    let r = virasoro::virasoro_report(&parse_kappa(kappa)?, parse_sector(sector)?).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("kappa", r.kappa)?;
    d.set_item("sector", r.sector.to_string())?;
    d.set_item("singular_12", r.singular_12)?;
    d.set_item("singular_21", r.singular_21)?;
    d.set_item("w_eigenvalue", (r.w_eigenvalue_num, r.w_eigenvalue_den))?;
    d.set_item("matches_formula", r.matches_formula)?;
    Ok(d)
}

/// Drift-free exponents `b` for a derivative exponent `h`; complex when
/// the discriminant is negative.
#[pyfunction]
fn one_point_exponents(kappa: f64, h: f64) -> (Complex64, Complex64) {
    match observables::one_point_exponents(kappa, h) {
        ExponentRoots::Real { roots } => (Complex64::new(roots[0], 0.0), Complex64::new(roots[1], 0.0)),
        ExponentRoots::Complex { re, im } => (Complex64::new(re, im), Complex64::new(re, -im)),
    }
}

#[pyfunction]
fn drift_residual(kappa: f64, a: f64, b: f64) -> f64 {
    observables::drift_residual(kappa, a, b)
}

#[pyfunction]
fn audit_printed_exponents<'py>(py: Python<'py>, kappa: f64) -> PyResult<Bound<'py, PyDict>> {
    let audit = observables::audit_printed_exponents(kappa);
    let pair = |c: observables::PairCheck| (c.a, c.b, c.residual, c.satisfied);
    let d = PyDict::new(py);
    d.set_item("kappa", audit.kappa)?;
    d.set_item("printed", pair(audit.printed))?;
    d.set_item("candidates", audit.candidates.into_iter().map(pair).collect::<Vec<_>>())?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (kappa, y, a, b, horizon, n_steps, n_samples, seed, workers = None))]
#[allow(clippy::too_many_arguments)]
fn run_martingale_test<'py>(
    py: Python<'py>,
    kappa: f64,
    y: f64,
    a: f64,
    b: f64,
    horizon: f64,
    n_steps: usize,
    n_samples: usize,
    seed: u64,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = McConfig::one_point(kappa, y, (a, b), horizon, n_steps, n_samples, seed).map_err(value_error)?;
    let report = py
        .detach(|| montecarlo::with_workers(workers, || montecarlo::run_martingale_test(&config)))
        .map_err(value_error)?
        .map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("initial_value", report.initial_value)?;
    d.set_item("verdict", report.verdict)?;
    d.set_item("max_abs_z", report.max_abs_z())?;
    let records: Vec<_> = report
        .records
        .iter()
        .map(|r| (r.t, r.mean, r.stderr, r.z, r.n_alive, r.n_stopped))
        .collect();
    d.set_item("records", records)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (kappa, horizon, n_steps, n_samples, seed, points, workers = None))]
#[allow(clippy::too_many_arguments)]
fn run_inverse_consistency<'py>(
    py: Python<'py>,
    kappa: f64,
    horizon: f64,
    n_steps: usize,
    n_samples: usize,
    seed: u64,
    points: Vec<Complex64>,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = InverseConfig {
        kappa,
        horizon,
        n_steps,
        n_samples,
        master_seed: seed,
        points: points.iter().map(|z| [z.re, z.im]).collect(),
    };
    let report = py
        .detach(|| montecarlo::with_workers(workers, || montecarlo::run_inverse_consistency(&config)))
        .map_err(value_error)?
        .map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("max_error", report.max_error)?;
    d.set_item("mean_error", report.mean_error)?;
    d.set_item("tolerance", report.tolerance)?;
    d.set_item("pass", report.pass)?;
    Ok(d)
}

#[pymodule]
fn revsle(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDrivingPath>()?;
    m.add_class::<PyLoewnerEvolution>()?;
    m.add_function(wrap_pyfunction!(sample_brownian, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_wholeplane, m)?)?;
    m.add_function(wrap_pyfunction!(central_charge, m)?)?;
    m.add_function(wrap_pyfunction!(kac_weight, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_check, m)?)?;
    m.add_function(wrap_pyfunction!(virasoro_report, m)?)?;
    m.add_function(wrap_pyfunction!(one_point_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(drift_residual, m)?)?;
    m.add_function(wrap_pyfunction!(audit_printed_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(run_martingale_test, m)?)?;
    m.add_function(wrap_pyfunction!(run_inverse_consistency, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
