//! Python bindings, imported as `subflow`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ::subflow as sf;
use sf::functional::{self, HyperProfile};
use sf::pflow::{self, EnergyParams, FlowSchedule, SolverOptions};
use sf::space::{self, Edge, GridSpec};
use sf::subop::{self, SubordinationPlan};
use sf::subordinator::{self, QuadratureSpec, StableParams};

fn py_err(e: sf::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for sf::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn energy_params(p: f64, m_const: f64) -> PyResult<EnergyParams> {
    let params = EnergyParams { p, m_const };
    params.validate().py()?;
    Ok(params)
}

#[pyclass(name = "MeasureSpace", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpace(space::MeasureSpace);

#[pymethods]
impl PySpace {
    #[new]
    #[pyo3(signature = (mass, grounded = Vec::new()))]
    fn new(mass: Vec<f64>, grounded: Vec<usize>) -> PyResult<Self> {
        space::MeasureSpace::new(mass, &grounded).py().map(Self)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn mass(&self) -> Vec<f64> {
        self.0.mass().to_vec()
    }

    #[getter]
    fn grounded(&self) -> Vec<usize> {
        self.0.grounded_nodes()
    }

    fn total_mass(&self) -> f64 {
        self.0.total_mass()
    }

    /// `q = float("inf")` gives the essential sup.
    fn lp_norm(&self, u: Vec<f64>, q: f64) -> PyResult<f64> {
        self.0.lp_norm(&u, q).py()
    }

    fn inner(&self, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        self.0.inner(&u, &v).py()
    }
}

#[pyclass(name = "Graph", frozen)]
struct PyGraph(space::WeightedGraph);

#[pymethods]
impl PyGraph {
    /// `edges` holds `(i, j, weight)` triples.
    #[new]
    #[pyo3(signature = (mass, edges, grounded = Vec::new()))]
    fn new(mass: Vec<f64>, edges: Vec<(usize, usize, f64)>, grounded: Vec<usize>) -> PyResult<Self> {
        let space = space::MeasureSpace::new(mass, &grounded).py()?;
        let edges = edges.into_iter().map(|(i, j, weight)| Edge { i, j, weight }).collect();
        space::WeightedGraph::new(space, edges).py().map(Self)
    }

    #[staticmethod]
    #[pyo3(signature = (n_points, length = 1.0, p_for_weights = 2.0, dirichlet_ends = true))]
    fn path_grid(n_points: usize, length: f64, p_for_weights: f64, dirichlet_ends: bool) -> PyResult<Self> {
        let spec = GridSpec { n_points, length, p_for_weights, dirichlet_ends };
        space::build_path_grid(&spec).py().map(Self)
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        space::WeightedGraph::from_file(path).py().map(Self)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn space(&self) -> PySpace {
        PySpace(self.0.space().clone())
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.0.edges().iter().map(|e| (e.i, e.j, e.weight)).collect()
    }

    fn is_connected(&self) -> bool {
        self.0.is_connected()
    }
}

#[pyfunction]
#[pyo3(signature = (graph, u, p, m_const = 1.0))]
fn energy(graph: &PyGraph, u: Vec<f64>, p: f64, m_const: f64) -> PyResult<f64> {
    pflow::energy(&graph.0, &u, &energy_params(p, m_const)?).py()
}

#[pyfunction]
#[pyo3(signature = (graph, u, p, m_const = 1.0))]
fn grad_energy(graph: &PyGraph, u: Vec<f64>, p: f64, m_const: f64) -> PyResult<Vec<f64>> {
    pflow::grad_energy(&graph.0, &u, &energy_params(p, m_const)?).py()
}

#[pyfunction]
#[pyo3(signature = (graph, u, p, tau, tol = 1e-10, max_iter = 20000))]
fn prox_step(graph: &PyGraph, u: Vec<f64>, p: f64, tau: f64, tol: f64, max_iter: usize) -> PyResult<Vec<f64>> {
    let params = energy_params(p, 1.0)?;
    pflow::prox_step(&graph.0, &u, &params, tau, &SolverOptions { tol, max_iter }).py()
}

/// Returns `(times, states, energies)`, starting at `t = 0`.
#[pyfunction]
#[pyo3(signature = (graph, u, p, t_final, n_steps, sample_times, solver_tol = 1e-10))]
fn evolve(
    py: Python<'_>,
    graph: &PyGraph,
    u: Vec<f64>,
    p: f64,
    t_final: f64,
    n_steps: usize,
    sample_times: Vec<f64>,
    solver_tol: f64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let params = energy_params(p, 1.0)?;
    let sched = FlowSchedule { solver_tol, ..FlowSchedule::new(t_final, n_steps) };
    let traj = py.detach(|| pflow::evolve(&graph.0, &u, &params, &sched, &sample_times)).py()?;
    Ok((traj.times, traj.states, traj.energies))
}

fn stable(alpha: f64) -> PyResult<(StableParams, QuadratureSpec)> {
    let params = StableParams::new(alpha).py()?;
    let spec = QuadratureSpec::for_density(&params);
    Ok((params, spec))
}

#[pyfunction]
fn stable_density(alpha: f64, t: f64, x: f64) -> PyResult<f64> {
    subordinator::stable_density(&StableParams::new(alpha).py()?, t, x).py()
}

#[pyfunction]
fn laplace_transform(alpha: f64, t: f64, lam: f64) -> PyResult<f64> {
    let (params, spec) = stable(alpha)?;
    subordinator::laplace_transform(&params, t, lam, &spec).py()
}

#[pyfunction]
fn negative_moment(alpha: f64, t: f64, beta: f64) -> PyResult<f64> {
    let (params, spec) = stable(alpha)?;
    subordinator::negative_moment(&params, t, beta, &spec).py()
}

/// Returns `(value, head_bound, tail_bound)`.
#[pyfunction]
fn frac_generator(py: Python<'_>, graph: &PyGraph, u: Vec<f64>, p: f64, alpha: f64) -> PyResult<(Vec<f64>, f64, f64)> {
    let params = energy_params(p, 1.0)?;
    let plan = SubordinationPlan::new(alpha).py()?;
    let g = py.detach(|| subop::frac_generator(&graph.0, &u, &params, &plan)).py()?;
    Ok((g.value, g.head_bound, g.tail_bound))
}

#[pyfunction]
fn subordinate(py: Python<'_>, graph: &PyGraph, u: Vec<f64>, p: f64, alpha: f64, t: f64) -> PyResult<Vec<f64>> {
    let params = energy_params(p, 1.0)?;
    let plan = SubordinationPlan::new(alpha).py()?;
    py.detach(|| subop::subordinate(&graph.0, &u, &params, &plan, t)).py()
}

/// Returns `(lhs, rhs)`.
#[pyfunction]
fn frac_norm_bound(py: Python<'_>, graph: &PyGraph, u: Vec<f64>, p: f64, alpha: f64) -> PyResult<(f64, f64)> {
    let params = energy_params(p, 1.0)?;
    let plan = SubordinationPlan::new(alpha).py()?;
    let nb = py.detach(|| subop::frac_norm_bound(&graph.0, &u, &params, &plan)).py()?;
    Ok((nb.lhs, nb.rhs))
}

#[pyfunction]
fn monotonicity_gap(py: Python<'_>, graph: &PyGraph, u: Vec<f64>, v: Vec<f64>, p: f64, alpha: f64) -> PyResult<f64> {
    let params = energy_params(p, 1.0)?;
    let plan = SubordinationPlan::new(alpha).py()?;
    py.detach(|| subop::monotonicity_gap(&graph.0, &u, &v, &params, &plan)).py()
}

#[pyfunction]
fn young_j(space: &PySpace, u: Vec<f64>, q: f64) -> PyResult<f64> {
    functional::young_j(&space.0, &u, q).py()
}

#[pyfunction]
fn interp_bound_check(space: &PySpace, u: Vec<f64>, q: f64, r: f64) -> PyResult<(f64, f64)> {
    functional::interp_bound_check(&space.0, &u, q, r).py()
}

#[pyfunction]
fn logsob_constants(r_dot0: f64, alpha_dot0: f64, k_dot0: f64) -> PyResult<(f64, f64, f64)> {
    let c = functional::logsob_constants(&HyperProfile::new(r_dot0, alpha_dot0, k_dot0).py()?).py()?;
    Ok((c.c1, c.c2, c.c3))
}

#[pyfunction]
#[pyo3(signature = (r_dot0, alpha_dot0, k_dot0, p, m_const = 1.0))]
fn hom_constants(r_dot0: f64, alpha_dot0: f64, k_dot0: f64, p: f64, m_const: f64) -> PyResult<(f64, f64)> {
    let prof = HyperProfile::new(r_dot0, alpha_dot0, k_dot0).py()?;
    let h = functional::hom_constants(&prof, p, m_const).py()?;
    Ok((h.k1, h.k2))
}

#[pyfunction]
fn dimension(r_dot0: f64, alpha_dot0: f64, p: f64) -> PyResult<f64> {
    functional::dimension(&HyperProfile::new(r_dot0, alpha_dot0, 0.0).py()?, p).py()
}

#[pyfunction]
fn dim_alpha(d: f64, p: f64, alpha: f64) -> PyResult<f64> {
    functional::dim_alpha(d, p, alpha).py()
}

#[pyfunction]
fn ultra_exponents(d: f64, p: f64, q: f64, rho: f64) -> PyResult<(f64, f64)> {
    let e = functional::ultra_exponents(d, p, q, rho).py()?;
    Ok((e.alpha_exp, e.gamma_exp))
}

#[pyfunction]
fn gamma_sub(d: f64, p: f64, rho: f64) -> PyResult<f64> {
    functional::gamma_sub(d, p, rho).py()
}

#[pyfunction]
fn super_profile(t: f64, s: f64, beta: f64) -> PyResult<(f64, f64)> {
    functional::super_profile(t, s, beta).py()
}

/// Runs a scenario given as JSON text and returns the JSON report.
#[pyfunction]
fn run_scenario(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = sf::cli::ScenarioConfig::from_json(config_json).py()?;
    let report = py.detach(|| sf::cli::run_scenario(&cfg)).py()?;
    sf::cli::render_report(&report, sf::cli::Format::Json).py()
}

#[pymodule]
#[pyo3(name = "subflow")]
fn subflow_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", sf::cli::TOOL_VERSION)?;
    m.add_class::<PySpace>()?;
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(grad_energy, m)?)?;
    m.add_function(wrap_pyfunction!(prox_step, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(stable_density, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_transform, m)?)?;
    m.add_function(wrap_pyfunction!(negative_moment, m)?)?;
    m.add_function(wrap_pyfunction!(frac_generator, m)?)?;
    m.add_function(wrap_pyfunction!(subordinate, m)?)?;
    m.add_function(wrap_pyfunction!(frac_norm_bound, m)?)?;
    m.add_function(wrap_pyfunction!(monotonicity_gap, m)?)?;
    m.add_function(wrap_pyfunction!(young_j, m)?)?;
    m.add_function(wrap_pyfunction!(interp_bound_check, m)?)?;
    m.add_function(wrap_pyfunction!(logsob_constants, m)?)?;
    m.add_function(wrap_pyfunction!(hom_constants, m)?)?;
    m.add_function(wrap_pyfunction!(dimension, m)?)?;
    m.add_function(wrap_pyfunction!(dim_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(ultra_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_sub, m)?)?;
    m.add_function(wrap_pyfunction!(super_profile, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
