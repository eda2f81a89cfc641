//! Python bindings: graphs, problems, the solver and the certificate checks.
//!
//! Vertex functions cross the boundary as `dict[str, float]` keyed by
//! vertex id.

use std::collections::{BTreeMap, HashMap};

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use yamabe_core::cli::parse_problem;
use yamabe_core::functionals::energy as core_energy;
use yamabe_core::operators::p_laplacian as core_p_laplacian;
use yamabe_core::verification::{
    certify as core_certify, gradient_check as core_gradient_check, oracle_solve_small,
    residual as core_residual,
};
use yamabe_core::{
    solve_yamabe, CheckStatus, Error, LaplacianVariant, ProblemSpec, SolveMode, SolveOptions,
    VertexFunction, WeightedGraph,
};

create_exception!(yamabe, NoConvergenceError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NoConvergence { .. } => NoConvergenceError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse_variant(s: &str) -> PyResult<LaplacianVariant> {
    s.parse().map_err(|e: Error| PyValueError::new_err(e.to_string()))
}

fn parse_mode(s: &str) -> PyResult<SolveMode> {
    match s {
        "mu_form" => Ok(SolveMode::MuForm),
        "rescale" => Ok(SolveMode::Rescale),
        "normalized" => Ok(SolveMode::Normalized),
        _ => Err(PyValueError::new_err(format!(
            "mode must be mu_form, rescale or normalized, got {s:?}"
        ))),
    }
}

fn function(g: &WeightedGraph, values: HashMap<String, f64>) -> PyResult<VertexFunction> {
    let pairs: Vec<(String, f64)> = values.into_iter().collect();
    VertexFunction::from_pairs(g, &pairs).map_err(to_py)
}

fn as_dict(g: &WeightedGraph, u: &VertexFunction) -> BTreeMap<String, f64> {
    g.ids().iter().cloned().zip(u.as_slice().iter().copied()).collect()
}

/// A finite connected weighted graph with vertex measure.
#[pyclass(name = "Graph", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: WeightedGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (vertices, edges))]
    fn new(vertices: Vec<(String, f64)>, edges: Vec<(String, String, f64)>) -> PyResult<Self> {
        WeightedGraph::build(&vertices, &edges).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Vertex ids in canonical (ascending) order.
    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    fn edges(&self) -> Vec<(String, String, f64)> {
        let ids = self.inner.ids();
        self.inner.edges().iter().map(|&(i, j, w)| (ids[i].clone(), ids[j].clone(), w)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Graph(vertices={}, edges={})", self.inner.len(), self.inner.edges().len())
    }
}

/// Exponents, coefficients, Laplacian variant and solve mode on a graph.
#[pyclass(name = "Problem", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProblem {
    inner: ProblemSpec,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (graph, p, q, alpha, h, f, variant = "edge", mode = "mu_form"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        graph: &PyGraph,
        p: f64,
        q: f64,
        alpha: f64,
        h: HashMap<String, f64>,
        f: HashMap<String, f64>,
        variant: &str,
        mode: &str,
    ) -> PyResult<Self> {
        let g = &graph.inner;
        let (h, f) = (function(g, h)?, function(g, f)?);
        ProblemSpec::new(g, p, q, alpha, h, f, parse_variant(variant)?, parse_mode(mode)?)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn variant(&self) -> String {
        self.inner.variant().to_string()
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode().to_string()
    }
}

#[pyclass(name = "SolveResult", frozen, get_all)]
struct PySolveResult {
    u: BTreeMap<String, f64>,
    /// λ of the final equation.
    lam: f64,
    mu: f64,
    energy: f64,
    iterations: usize,
    residual_max: f64,
    mode: String,
    restarts_used: usize,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(mode={}, lam={}, mu={}, energy={}, residual_max={:e})",
            self.mode, self.lam, self.mu, self.energy, self.residual_max
        )
    }
}

/// Parses a problem file's JSON text into `(graph, problem, lam, digest)`.
#[pyfunction]
fn load_problem(text: &str) -> PyResult<(PyGraph, PyProblem, f64, String)> {
    let p = parse_problem(text).map_err(to_py)?;
    Ok((PyGraph { inner: p.graph }, PyProblem { inner: p.spec }, p.lambda, p.digest))
}

/// Solves the equation selected by the problem's mode. `lam` is λ in
/// mu_form, λ̃ (negative) in rescale and ignored in normalized mode.
#[pyfunction]
#[pyo3(signature = (graph, problem, lam = 0.0, tol = 1e-10, max_iter = 200_000, restarts = 4, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    graph: &PyGraph,
    problem: &PyProblem,
    lam: f64,
    tol: f64,
    max_iter: usize,
    restarts: usize,
    seed: u64,
) -> PyResult<PySolveResult> {
    let opts = SolveOptions { tol, max_iter, restarts, seed, ..SolveOptions::default() };
    let (g, prob) = (&graph.inner, &problem.inner);
    let r = py.detach(|| solve_yamabe(g, prob, lam, &opts)).map_err(to_py)?;
    Ok(PySolveResult {
        u: as_dict(g, &r.u),
        lam: r.lambda,
        mu: r.mu,
        energy: r.energy,
        iterations: r.iterations,
        residual_max: r.residual_max,
        mode: r.mode.to_string(),
        restarts_used: r.restarts_used,
    })
}

#[pyfunction]
#[pyo3(signature = (graph, u, p, variant = "edge"))]
fn p_laplacian(graph: &PyGraph, u: HashMap<String, f64>, p: f64, variant: &str) -> PyResult<BTreeMap<String, f64>> {
    let g = &graph.inner;
    let lap = core_p_laplacian(g, &function(g, u)?, p, parse_variant(variant)?).map_err(to_py)?;
    Ok(as_dict(g, &lap))
}

/// `E(u) = (1/p) ∫|∇u|^p dμ − (λ/α) ∫ f u^α dμ`.
#[pyfunction]
fn energy(graph: &PyGraph, problem: &PyProblem, u: HashMap<String, f64>, lam: f64) -> PyResult<f64> {
    let g = &graph.inner;
    core_energy(g, &problem.inner, &function(g, u)?, lam).map_err(to_py)
}

/// Pointwise residual `−Δ_p u − λ f u^{α−1} + μ h u^{q−1}` and its sup norm.
#[pyfunction]
#[pyo3(signature = (graph, problem, u, lam, mu = 1.0))]
fn residual(
    graph: &PyGraph,
    problem: &PyProblem,
    u: HashMap<String, f64>,
    lam: f64,
    mu: f64,
) -> PyResult<(BTreeMap<String, f64>, f64)> {
    let g = &graph.inner;
    let (r, max) = core_residual(g, &problem.inner, &function(g, u)?, lam, mu).map_err(to_py)?;
    Ok((as_dict(g, &r), max))
}

/// All certificate checks for a solution; each is a dict with name,
/// status, measured, bound and slack.
#[pyfunction]
#[pyo3(signature = (graph, problem, u, lam, mu, lambda_input = 0.0, tol = 1e-10))]
#[allow(clippy::too_many_arguments)]
fn certify<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    problem: &PyProblem,
    u: HashMap<String, f64>,
    lam: f64,
    mu: f64,
    lambda_input: f64,
    tol: f64,
) -> PyResult<Vec<Bound<'py, pyo3::types::PyDict>>> {
    let g = &graph.inner;
    let report = core_certify(g, &problem.inner, &function(g, u)?, lam, mu, lambda_input, tol).map_err(to_py)?;
    report
        .checks
        .iter()
        .map(|c| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("name", &c.name)?;
            d.set_item(
                "status",
                match c.status {
                    CheckStatus::Pass => "pass",
                    CheckStatus::Fail => "fail",
                    CheckStatus::NotApplicable => "not_applicable",
                },
            )?;
            d.set_item("measured", c.measured)?;
            d.set_item("bound", c.bound)?;
            d.set_item("slack", c.slack)?;
            Ok(d)
        })
        .collect()
}

/// Largest relative discrepancy between analytic and centered-difference
/// derivatives of E and G at `u`.
#[pyfunction]
#[pyo3(signature = (graph, problem, u, lam, step = 1e-6, seed = 0))]
fn gradient_check(
    graph: &PyGraph,
    problem: &PyProblem,
    u: HashMap<String, f64>,
    lam: f64,
    step: f64,
    seed: u64,
) -> PyResult<f64> {
    let g = &graph.inner;
    let r = core_gradient_check(g, &problem.inner, &function(g, u)?, lam, step, seed);
    match r.error {
        Some(e) => Err(PyValueError::new_err(e)),
        None => Ok(r.max_discrepancy()),
    }
}

/// Every solution of the stationarity system found by multi-start Newton
/// (at most 4 vertices), as `(u, multiplier)` pairs.
#[pyfunction]
fn oracle(
    py: Python<'_>,
    graph: &PyGraph,
    problem: &PyProblem,
    lam: f64,
) -> PyResult<Vec<(BTreeMap<String, f64>, f64)>> {
    let (g, prob) = (&graph.inner, &problem.inner);
    let sols = py.detach(|| oracle_solve_small(g, prob, lam)).map_err(to_py)?;
    Ok(sols.iter().map(|s| (as_dict(g, &s.u), s.multiplier)).collect())
}

#[pymodule]
fn yamabe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolveResult>()?;
    m.add("NoConvergenceError", m.py().get_type::<NoConvergenceError>())?;
    m.add_function(wrap_pyfunction!(load_problem, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(p_laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(residual, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    Ok(())
}
