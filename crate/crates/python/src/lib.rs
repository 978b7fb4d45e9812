//! Python bindings. Results come back as plain dicts and lists.

use nalgebra::DVector;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use serde_json::json;

use turnpike_core::cli::Config;
use turnpike_core::dissipativity::{certify, verify_strict_dissipativity, RateChoice};
use turnpike_core::model::is_admissible_with;
use turnpike_core::ocp::solve_ocp_with;
use turnpike_core::steady_state::{certified_steady_state, verify_kkt};
use turnpike_core::system_analysis::analyze;
use turnpike_core::turnpike::InitialSet;
use turnpike_core::Error;

create_exception!(turnpike, InfeasibleError, PyRuntimeError, "No admissible trajectory or steady state exists.");
create_exception!(turnpike, CertificateError, PyRuntimeError, "A certificate could not be built.");

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Infeasible { .. } | Error::InfeasibleSteadyState => InfeasibleError::new_err(e.to_string()),
        Error::NoFeasibleRate
        | Error::StorageInfeasible(_)
        | Error::NotDecaying
        | Error::WitnessInadmissible { .. }
        | Error::SingularReducedHessian
        | Error::HypothesisViolated(_) => CertificateError::new_err(e.to_string()),
        Error::NonConvergence { .. } | Error::NonConverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, value: &impl Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn rows(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

/// Constrained LQ problem together with its tolerances, initial set and witness.
#[pyclass(frozen)]
struct Problem {
    config: Config,
    problem: turnpike_core::Problem,
}

impl Problem {
    fn from_config(config: Config) -> PyResult<Self> {
        let problem = config.problem().map_err(py_err)?;
        Ok(Self { config, problem })
    }
}

#[pymethods]
impl Problem {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Self::from_config(Config::parse(text).map_err(py_err)?)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Self::from_config(Config::load(path.as_ref()).map_err(py_err)?)
    }

    /// `"example1"` or `"example2"`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        let config = Config::builtin(name).ok_or_else(|| PyValueError::new_err(format!("unknown example {name:?}")))?;
        Self::from_config(config)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.config.to_toml().map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.problem.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.problem.m()
    }

    fn analyze(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &analyze(&self.problem))
    }

    fn steady_state(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let cert = certified_steady_state(&self.problem).map_err(py_err)?;
        let check = verify_kkt(&cert, &self.problem);
        let mut value = serde_json::to_value(&cert).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        value["verification"] = json!(check);
        to_py(py, &value)
    }

    /// Storage certificate at a fixed rate, or at the largest rate found when
    /// `rate` is omitted.
    #[pyo3(signature = (rate=None, samples=None, seed=42))]
    fn certify(&self, py: Python<'_>, rate: Option<f64>, samples: Option<usize>, seed: u64) -> PyResult<Py<PyAny>> {
        let choice = match rate {
            Some(s) if !(s > 0.0) => return Err(PyValueError::new_err(format!("rate must be positive, got {s}"))),
            Some(s) => RateChoice::Fixed(s),
            None => RateChoice::Auto,
        };
        let samples = samples.unwrap_or(self.config.tolerances.samples);
        let p = &self.problem;
        let (sc, report) = py
            .detach(|| {
                let (_, sc) = certify(p, choice)?;
                let report = verify_strict_dissipativity(&sc, p, samples, seed)?;
                Ok((sc, report))
            })
            .map_err(py_err)?;
        let mut value = serde_json::to_value(&sc).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        value["verification"] = json!(report);
        to_py(py, &value)
    }

    /// Optimal trajectory from `x0` over `horizon` steps.
    fn solve(&self, py: Python<'_>, x0: Vec<f64>, horizon: usize) -> PyResult<Py<PyAny>> {
        if x0.len() != self.problem.n() {
            return Err(PyValueError::new_err(format!("x0 has {} entries, expected {}", x0.len(), self.problem.n())));
        }
        let x0 = DVector::from_vec(x0);
        let opts = self.config.tolerances.ocp_options();
        let p = &self.problem;
        let sol = py.detach(|| solve_ocp_with(p, &x0, horizon, &opts)).map_err(py_err)?;
        let t = &sol.trajectory;
        let value = json!({
            "states": rows(&t.states),
            "controls": rows(&t.controls),
            "stage_costs": t.stage_costs,
            "total_cost": t.total_cost,
            "admissible": is_admissible_with(p, t, opts.admissibility_tol).admissible,
            "stats": sol.stats,
        });
        to_py(py, &value)
    }

    /// Exceedance counts over the grid `horizons × eps`. `initial_states`
    /// replaces the configured initial set.
    #[pyo3(signature = (horizons, eps, samples=20, seed=42, initial_states=None))]
    fn scan(
        &self,
        py: Python<'_>,
        horizons: Vec<usize>,
        eps: Vec<f64>,
        samples: usize,
        seed: u64,
        initial_states: Option<Vec<Vec<f64>>>,
    ) -> PyResult<Py<PyAny>> {
        if horizons.is_empty() || eps.is_empty() {
            return Err(PyValueError::new_err("horizons and eps must be non-empty"));
        }
        if let Some(e) = eps.iter().find(|e| !(**e > 0.0)) {
            return Err(PyValueError::new_err(format!("thresholds must be positive, got {e}")));
        }
        let initial_set = match initial_states {
            Some(points) => InitialSet::Points { points },
            None => self
                .config
                .xtp
                .clone()
                .ok_or_else(|| PyValueError::new_err("no initial set configured; pass initial_states"))?,
        };
        let (cfg, p) = (&self.config, &self.problem);
        let report = py
            .detach(|| cfg.scan(p, &initial_set, samples, &horizons, &eps, seed))
            .map_err(py_err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Problem(n={}, m={})", self.problem.n(), self.problem.m())
    }
}

#[pymodule]
fn turnpike(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("CertificateError", m.py().get_type::<CertificateError>())?;
    Ok(())
}
