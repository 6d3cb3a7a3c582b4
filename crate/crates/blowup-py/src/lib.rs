//! Python bindings for the blow-up solver.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use blowup::ansatz::{bubble, BlowupConfig, BubbleParams};
use blowup::cli::{self, exit_code};
use blowup::greens::GreenTable;
use blowup::reduced::{full_energy, minimize_xi, XiLandscape};
use blowup::reduction::{assemble, end_to_end_residual, outer_reduce, ReductionOptions};
use blowup::{verify, ConfigPoint, Error, IntervalUnion, KappaField};

fn py_err(e: Error) -> PyErr {
    if exit_code(&e) == 2 {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Serialisable report to a Python object via JSON.
fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

/// Finite union of disjoint open intervals.
#[pyclass(name = "Domain", frozen)]
struct PyDomain(IntervalUnion);

#[pymethods]
impl PyDomain {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        IntervalUnion::parse(spec).map(PyDomain).map_err(py_err)
    }

    fn components(&self) -> Vec<(f64, f64)> {
        self.0.components().to_vec()
    }

    fn measure(&self) -> f64 {
        self.0.measure()
    }

    fn contains(&self, x: f64) -> bool {
        self.0.contains(x)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Domain('{}')", self.0.to_spec())
    }
}

/// Dirichlet Green function G = Γ + H of the domain.
#[pyclass(name = "GreenTable", frozen)]
struct PyGreenTable(Arc<GreenTable>);

#[pymethods]
impl PyGreenTable {
    #[new]
    #[pyo3(signature = (domain, h = 0.005))]
    fn new(domain: &PyDomain, h: f64) -> PyResult<Self> {
        Ok(Self(Arc::new(GreenTable::new(&domain.0, h).map_err(py_err)?)))
    }

    fn green(&self, x: f64, z: f64) -> PyResult<f64> {
        self.0.green(x, z).map_err(py_err)
    }

    fn regular(&self, x: f64, z: f64) -> PyResult<f64> {
        self.0.regular(x, z).map_err(py_err)
    }

    fn robin(&self, z: f64) -> PyResult<f64> {
        self.0.robin(z).map_err(py_err)
    }

    #[getter]
    fn closed_form(&self) -> bool {
        self.0.is_closed_form()
    }
}

/// Interior minimiser of the reduced energy; returns (ξ, value).
#[pyfunction]
#[pyo3(signature = (table, m, kappa = 1.0, delta = 0.01, tol = 1e-6))]
fn minimize_reduced(table: &PyGreenTable, m: usize, kappa: f64, delta: f64, tol: f64) -> PyResult<(Vec<f64>, f64)> {
    let mut land = XiLandscape::injective(table.0.clone(), KappaField::Constant(kappa), m, delta).map_err(py_err)?;
    if m <= 3 {
        land.sample(11).map_err(py_err)?;
    }
    let xi = minimize_xi(&mut land, tol).map_err(py_err)?;
    let value = land.minimizer.as_ref().map_or(f64::NAN, |m| m.value);
    Ok((xi.xi, value))
}

/// Builds u_ε at the configuration ξ and returns its profile and diagnostics.
#[pyfunction]
#[pyo3(signature = (table, eps, xi, h = 0.1, sigma = 0.25, delta0 = 0.1))]
fn construct<'py>(
    py: Python<'py>,
    table: &PyGreenTable,
    eps: f64,
    xi: Vec<f64>,
    h: f64,
    sigma: f64,
    delta0: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let gt = &table.0;
    let mut cfg = BlowupConfig::new(gt.domain.clone(), eps, ConfigPoint::new(xi, delta0));
    cfg.sigma = sigma;
    cfg.validate().map_err(py_err)?;
    let (out, x, u) = py.detach(|| -> blowup::Result<_> {
        let sys = cfg.expanded_system(h)?;
        let r = outer_reduce(&cfg, gt, &sys, &ReductionOptions::default())?;
        let (b, s) = (&r.solved.bundle, &r.solved.state);
        let u = assemble(b, s)?;
        let mass = verify::mass(&u, eps, eps, &b.kappa, &sys)?;
        let energy = full_energy(&u, eps, eps, &b.kappa, &sys)?;
        let residual = end_to_end_residual(b, s, &sys)?;
        let x: Vec<f64> = sys.interior.iter().map(|&i| eps * u.grid.x(i)).collect();
        let vals: Vec<f64> = sys.interior.iter().map(|&i| u.values[i]).collect();
        let rec = blowup::reduction::state_record(b, s);
        Ok(((rec, mass, energy, residual, r.converged), x, vals))
    })
    .map_err(py_err)?;
    let (rec, mass, energy, residual, converged) = out;
    let d = PyDict::new(py);
    d.set_item("x", x)?;
    d.set_item("u", u)?;
    d.set_item("xi", rec.xi.clone())?;
    d.set_item("mu", rec.mu.clone())?;
    d.set_item("c", rec.c.clone())?;
    d.set_item("phi_sup", rec.phi_sup)?;
    d.set_item("iterations", rec.iterations)?;
    d.set_item("mass", mass)?;
    d.set_item("energy", energy)?;
    d.set_item("residual", residual)?;
    d.set_item("converged", converged)?;
    Ok(d)
}

/// Standard bubble log(2μ/(μ² + (x−ξ)²)).
#[pyfunction]
fn bubble_value(mu: f64, xi: f64, x: f64) -> f64 {
    bubble(&BubbleParams { mu, xi }, x)
}

#[pyfunction]
fn pohozaev_kernel(x: f64, y: f64) -> PyResult<f64> {
    verify::pohozaev_kernel(x, y).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (mus, modes = 64))]
fn nondegeneracy<'py>(py: Python<'py>, mus: Vec<f64>, modes: usize) -> PyResult<Bound<'py, PyAny>> {
    let r = verify::nondegeneracy_check(&mus, modes).map_err(py_err)?;
    to_py(py, &r)
}

#[pyfunction]
fn barrier_constant(sigma: f64) -> f64 {
    verify::gamma_sigma(sigma)
}

/// Non-existence audit on the two-interval family.
#[pyfunction]
#[pyo3(signature = (delta0 = 0.1, delta = 0.02, ms = None))]
fn audit<'py>(py: Python<'py>, delta0: f64, delta: f64, ms: Option<Vec<usize>>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = verify::AuditConfig { delta0, delta, ms: ms.unwrap_or_default(), ..Default::default() };
    let r = py.detach(|| verify::nonexistence_audit(&cfg)).map_err(py_err)?;
    to_py(py, &r)
}

/// Runs a CLI subcommand against a TOML config and returns its exit code.
#[pyfunction]
#[pyo3(signature = (command, config, out = None, checks = None, parallel = None))]
fn run(
    py: Python<'_>,
    command: &str,
    config: PathBuf,
    out: Option<PathBuf>,
    checks: Option<Vec<String>>,
    parallel: Option<usize>,
) -> PyResult<i32> {
    let command = match command {
        "greens" => cli::Command::Greens,
        "construct" => cli::Command::Construct,
        "verify" => cli::Command::Verify,
        "landscape" => cli::Command::Landscape,
        "audit" => cli::Command::Audit,
        other => return Err(PyValueError::new_err(format!("unknown command '{other}'"))),
    };
    let args = cli::Args { command, config: Some(config), out, checks, parallel };
    Ok(py.detach(|| cli::run(&args)))
}

#[pymodule]
fn blowup_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", cli::VERSION)?;
    m.add_class::<PyDomain>()?;
    m.add_class::<PyGreenTable>()?;
    m.add_function(wrap_pyfunction!(minimize_reduced, m)?)?;
    m.add_function(wrap_pyfunction!(construct, m)?)?;
    m.add_function(wrap_pyfunction!(bubble_value, m)?)?;
    m.add_function(wrap_pyfunction!(pohozaev_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(nondegeneracy, m)?)?;
    m.add_function(wrap_pyfunction!(barrier_constant, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
