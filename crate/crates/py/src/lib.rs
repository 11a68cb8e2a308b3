//! Python bindings: graphs, spin systems, exact oracles, chains and couplings.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyTuple};

use spinlab_core::coupling::{build_saw_tree, saw_root_marginal, RecursiveCoupler};
use spinlab_core::dynamics::{
    conditional_glauber_mixing, down_up_matrix, set_simdownup_schedule, sim_down_up_sample, DEFAULT_C_CONST,
};
use spinlab_core::oracle::{self, glauber_matrix, spectral_gap};
use spinlab_core::partition::{construct_partition, Budget, PartitionMode};
use spinlab_core::rng::StreamSeed;
use spinlab_core::spin::{make_hardcore, make_list_coloring, make_two_spin};
use spinlab_core::{PartialConfig, Partition, Spin, SpinError, MINUS, PLUS};

fn err(e: SpinError) -> PyErr {
    match e {
        SpinError::SizeCap { .. } | SpinError::DepthCap { .. } | SpinError::Construction { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn spins(c: &[Spin]) -> Vec<u32> {
    c.iter().map(|&s| s as u32).collect()
}

fn tuple<'py>(py: Python<'py>, c: &[Spin]) -> PyResult<Bound<'py, PyTuple>> {
    PyTuple::new(py, spins(c))
}

fn to_pinning(p: Option<HashMap<usize, Spin>>) -> PartialConfig {
    PartialConfig::from_pairs(p.unwrap_or_default())
}

#[pyclass(name = "Graph", module = "spinlab", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyGraph {
    inner: spinlab_core::Graph,
}

#[pymethods]
impl PyGraph {
    /// `Graph(n, edges, left=None)`; with `left`, the graph is bipartite with
    /// the remaining vertices on the right.
    #[new]
    #[pyo3(signature = (n, edges, left=None))]
    fn new(n: usize, edges: Vec<(usize, usize)>, left: Option<Vec<usize>>) -> PyResult<Self> {
        let mut g = spinlab_core::Graph::new(n, &edges).map_err(err)?;
        if let Some(left) = left {
            let right = (0..n).filter(|v| !left.contains(v)).collect();
            g = g.with_bipartition(left, right).map_err(err)?;
        }
        Ok(PyGraph { inner: g })
    }

    #[staticmethod]
    fn path(n: usize) -> Self {
        PyGraph { inner: spinlab_core::Graph::path(n) }
    }

    #[staticmethod]
    fn cycle(n: usize) -> Self {
        PyGraph { inner: spinlab_core::Graph::cycle(n) }
    }

    #[staticmethod]
    fn complete(n: usize) -> Self {
        PyGraph { inner: spinlab_core::Graph::complete(n) }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn max_degree(&self) -> usize {
        self.inner.max_degree()
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, m={})", self.inner.n(), self.inner.edge_count())
    }
}

#[pyclass(name = "SpinSystem", module = "spinlab", frozen, from_py_object)]
#[derive(Clone)]
pub struct PySpinSystem {
    inner: spinlab_core::SpinSystem,
}

#[pymethods]
impl PySpinSystem {
    #[staticmethod]
    fn hardcore(graph: &PyGraph, lam: f64) -> PyResult<Self> {
        Ok(PySpinSystem { inner: make_hardcore(graph.inner.clone(), lam).map_err(err)? })
    }

    #[staticmethod]
    fn two_spin(graph: &PyGraph, beta: f64, gamma: f64, lam: f64) -> PyResult<Self> {
        Ok(PySpinSystem { inner: make_two_spin(graph.inner.clone(), beta, gamma, lam).map_err(err)? })
    }

    #[staticmethod]
    fn list_coloring(graph: &PyGraph, lists: Vec<Vec<Spin>>) -> PyResult<Self> {
        Ok(PySpinSystem { inner: make_list_coloring(graph.inner.clone(), &lists).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    fn weight(&self, config: Vec<Spin>) -> PyResult<f64> {
        self.inner.weight(&config).map_err(err)
    }

    /// Conditions on a `{vertex: spin}` pinning.
    fn condition(&self, pinning: HashMap<usize, Spin>) -> PyResult<Self> {
        Ok(PySpinSystem { inner: self.inner.condition(&PartialConfig::from_pairs(pinning)).map_err(err)? })
    }

    fn free_vertices(&self) -> Vec<usize> {
        self.inner.free_vertices()
    }
}

#[pyfunction]
fn partition_function(system: &PySpinSystem) -> PyResult<f64> {
    oracle::partition_function(&system.inner).map_err(err)
}

/// Support configurations and their probabilities.
#[pyfunction]
fn enumerate(system: &PySpinSystem) -> PyResult<(Vec<Vec<u32>>, Vec<f64>)> {
    let d = oracle::enumerate(&system.inner).map_err(err)?;
    Ok((d.support().iter().map(|c| spins(c)).collect(), d.probs().to_vec()))
}

/// Marginal law on `vertices` as `{configuration tuple: probability}`.
#[pyfunction]
fn marginal<'py>(py: Python<'py>, system: &PySpinSystem, vertices: Vec<usize>) -> PyResult<Bound<'py, PyDict>> {
    let d = oracle::exact_marginal(&system.inner, &vertices).map_err(err)?;
    let out = PyDict::new(py);
    for (c, p) in d.support().iter().zip(d.probs()) {
        out.set_item(tuple(py, c)?, *p)?;
    }
    Ok(out)
}

/// `{"lambda2", "gap", "t_rel"}` of Glauber dynamics, or of the k↔ℓ down-up
/// walk when `blocks` is given.
#[pyfunction]
#[pyo3(signature = (system, blocks=None, ell=1))]
fn spectral_gap_of(system: &PySpinSystem, blocks: Option<Vec<Vec<usize>>>, ell: usize) -> PyResult<HashMap<String, f64>> {
    let m = match blocks {
        None => glauber_matrix(&system.inner),
        Some(b) => {
            let p = Partition::new(b.len(), b).map_err(err)?;
            down_up_matrix(&system.inner, &p, ell)
        }
    }
    .map_err(err)?;
    let g = spectral_gap(&m);
    Ok(HashMap::from([
        ("lambda2".to_string(), g.lambda2),
        ("gap".to_string(), g.gap),
        ("t_rel".to_string(), g.t_rel),
    ]))
}

/// Root marginal `[P(−), P(+)]` from the self-avoiding-walk tree.
#[pyfunction]
#[pyo3(signature = (system, root, depth_cap=64))]
fn saw_marginal(system: &PySpinSystem, root: usize, depth_cap: usize) -> PyResult<Vec<f64>> {
    let (t, ts) = build_saw_tree(&system.inner, root, depth_cap).map_err(err)?;
    saw_root_marginal(&t, &ts).map_err(err)
}

/// `count` coupled pairs `(X, Y)` with `X ~ v←a`, `Y ~ v←b`. Two-spin
/// systems default to `a = −`, `b = +`.
#[pyfunction]
#[pyo3(signature = (system, v, count, seed, a=None, b=None, pinning=None))]
fn recursive_coupling(
    system: &PySpinSystem,
    v: usize,
    count: usize,
    seed: u64,
    a: Option<Spin>,
    b: Option<Spin>,
    pinning: Option<HashMap<usize, Spin>>,
) -> PyResult<Vec<(Vec<u32>, Vec<u32>)>> {
    let sys = &system.inner;
    let (mut c, a, b) = if sys.q() == 2 && a.is_none() && b.is_none() {
        (RecursiveCoupler::two_spin(sys).map_err(err)?, MINUS, PLUS)
    } else {
        let (a, b) = a.zip(b).ok_or_else(|| PyValueError::new_err("colourings need both a and b"))?;
        (RecursiveCoupler::coloring(sys).map_err(err)?, a, b)
    };
    let tau = to_pinning(pinning);
    let mut rng = StreamSeed(seed).rng();
    (0..count)
        .map(|_| c.sample(&tau, v, a, b, &mut rng).map(|(x, y)| (spins(&x), spins(&y))).map_err(err))
        .collect()
}

/// SimDownUp samples on the partition `blocks` with `M = 1`,
/// `η = 4/k`, so that `⌈4M/η⌉ = k`.
#[pyfunction]
#[pyo3(signature = (system, blocks, count, seed, eps=0.05, c_const=DEFAULT_C_CONST))]
fn sim_down_up(
    system: &PySpinSystem,
    blocks: Vec<Vec<usize>>,
    count: usize,
    seed: u64,
    eps: f64,
    c_const: f64,
) -> PyResult<Vec<Vec<u32>>> {
    let sys = &system.inner;
    let p = Partition::new(blocks.len(), blocks).map_err(err)?;
    if p.k() < 3 {
        return Err(PyValueError::new_err("need at least 3 blocks"));
    }
    let eta = 4.0 / p.k() as f64;
    let base = set_simdownup_schedule(1, sys.n(), eps, 1, eta, c_const).map_err(err)?;
    let t = conditional_glauber_mixing(sys, &p, base.base_level, 1.0 / (4.0 * std::f64::consts::E), 1_000_000)
        .map_err(err)?;
    let sched = set_simdownup_schedule(t, sys.n(), eps, 1, eta, c_const).map_err(err)?;
    let start = spinlab_core::dynamics::feasible_config(sys).map_err(err)?;
    let root = StreamSeed(seed);
    (0..count)
        .map(|i| sim_down_up_sample(sys, &p, &start, &sched, root.child(i as u64)).map(|x| spins(&x)).map_err(err))
        .collect()
}

/// Randomised (ξ,k)-degree partition; returns the blocks.
#[pyfunction]
#[pyo3(signature = (graph, k, xi, seed=0))]
fn degree_partition(graph: &PyGraph, k: usize, xi: f64, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    let (p, _) = construct_partition(&graph.inner, k, xi, PartitionMode::General, Budget::default(), seed).map_err(err)?;
    Ok(p.blocks().to_vec())
}

#[pyfunction]
fn lambda_critical(delta: u32) -> PyResult<f64> {
    spinlab_core::spin::lambda_critical(delta).map_err(err)
}

#[pyfunction]
fn alpha_star() -> f64 {
    spinlab_core::spin::alpha_star()
}

#[pymodule]
#[pyo3(name = "spinlab")]
fn spinlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PySpinSystem>()?;
    m.add_function(wrap_pyfunction!(partition_function, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(marginal, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_gap_of, m)?)?;
    m.add_function(wrap_pyfunction!(saw_marginal, m)?)?;
    m.add_function(wrap_pyfunction!(recursive_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(sim_down_up, m)?)?;
    m.add_function(wrap_pyfunction!(degree_partition, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_critical, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_star, m)?)?;
    m.add("__version__", spinlab_core::VERSION)?;
    Ok(())
}
