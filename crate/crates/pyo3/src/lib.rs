//! Python bindings: graphs, hierarchies, PPR estimates, PDist, layouts,
//! metrics and preprocessed workspaces.

use std::path::{Path, PathBuf};

use pprviz_core::graph::{parse_edge_list, DirectedGraph};
use pprviz_core::hierarchy::{build_hierarchy, SupergraphHierarchy};
use pprviz_core::layout::{stress_majorization, LayoutOptions, Point};
use pprviz_core::metrics::{node_distribution, ulcv as ulcv_of};
use pprviz_core::pdist::{self, build_pdist_matrix, PDistMatrix};
use pprviz_core::pipeline::{preprocess as run_preprocess, PreprocessConfig, PreprocessOutcome, VisualizeOptions, Workspace as CoreWorkspace};
use pprviz_core::ppr::{self, compute_dpr, Engine, GateMode, PprParams, Scope};
use pprviz_core::Error;
use pyo3::exceptions::{PyIOError, PyIndexError, PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

fn to_py(err: Error) -> PyErr {
    let msg = err.to_string();
    match err {
        Error::NotFound(_) => PyKeyError::new_err(msg),
        Error::NodeOutOfRange { .. } => PyIndexError::new_err(msg),
        Error::Io { .. } => PyIOError::new_err(msg),
        Error::Invariant(_) => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn json_loads(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(PyModule::import(py, "json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_engine(name: &str) -> PyResult<Engine> {
    name.parse().map_err(to_py)
}

/// Directed graph over dense node IDs `0..n`.
#[pyclass(module = "pprviz_py", frozen)]
struct Graph {
    inner: DirectedGraph,
    /// Original IDs when the graph came from an edge list.
    labels: Option<Vec<u64>>,
}

#[pymethods]
impl Graph {
    #[new]
    fn new(n: usize, edges: Vec<(u32, u32)>) -> PyResult<Self> {
        let inner = DirectedGraph::from_edges(n, edges).map_err(to_py)?;
        Ok(Self { inner, labels: None })
    }

    /// Parses whitespace-separated `u v` lines; IDs are remapped densely.
    #[staticmethod]
    #[pyo3(signature = (text, symmetrize = false))]
    fn from_edge_list(text: &str, symmetrize: bool) -> PyResult<Self> {
        let loaded = parse_edge_list(text, symmetrize, Path::new("<string>")).map_err(to_py)?;
        Ok(Self {
            inner: loaded.graph,
            labels: Some(loaded.remap),
        })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    /// Original ID of each dense node, if loaded from an edge list.
    #[getter]
    fn labels(&self) -> Option<Vec<u64>> {
        self.labels.clone()
    }

    fn out_neighbors(&self, v: u32) -> PyResult<Vec<u32>> {
        self.check(v)?;
        Ok(self.inner.out_neighbors(v).to_vec())
    }

    fn in_neighbors(&self, v: u32) -> PyResult<Vec<u32>> {
        self.check(v)?;
        Ok(self.inner.in_neighbors(v).to_vec())
    }

    fn edges(&self) -> Vec<(u32, u32)> {
        self.inner.edges().collect()
    }

    fn to_edge_list(&self) -> String {
        self.inner.to_edge_list_text()
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, m={})", self.inner.node_count(), self.inner.edge_count())
    }
}

impl Graph {
    fn check(&self, v: u32) -> PyResult<()> {
        let n = self.inner.node_count();
        if (v as usize) < n {
            Ok(())
        } else {
            Err(to_py(Error::NodeOutOfRange { id: v as usize, n }))
        }
    }
}

/// Bounded-fanout supergraph hierarchy.
#[pyclass(module = "pprviz_py", frozen)]
struct Hierarchy {
    inner: SupergraphHierarchy,
}

#[pymethods]
impl Hierarchy {
    #[new]
    fn new(py: Python<'_>, graph: &Graph, k: usize) -> PyResult<Self> {
        let inner = py.detach(|| build_hierarchy(&graph.inner, k)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn levels(&self) -> usize {
        self.inner.levels()
    }

    #[getter]
    fn root(&self) -> u32 {
        self.inner.root()
    }

    fn nodes_at(&self, level: usize) -> PyResult<Vec<u32>> {
        if level > self.inner.levels() {
            return Err(PyValueError::new_err(format!(
                "level {level} above the root level {}",
                self.inner.levels()
            )));
        }
        Ok(self.inner.nodes_at(level).collect())
    }

    fn children(&self, id: u32) -> PyResult<Vec<u32>> {
        self.check(id)?;
        Ok(self.inner.children(id).to_vec())
    }

    fn leaves(&self, id: u32) -> PyResult<Vec<u32>> {
        self.check(id)?;
        Ok(self.inner.leaves(id).to_vec())
    }

    fn parent(&self, id: u32) -> PyResult<Option<u32>> {
        self.check(id)?;
        Ok(self.inner.parent(id))
    }

    fn level_of(&self, id: u32) -> PyResult<usize> {
        self.check(id)?;
        Ok(self.inner.level_of(id))
    }

    fn is_leaf(&self, id: u32) -> PyResult<bool> {
        self.check(id)?;
        Ok(self.inner.is_leaf(id))
    }

    fn super_edges(&self, graph: &Graph, id: u32) -> PyResult<Vec<(u32, u32)>> {
        self.check(id)?;
        self.inner.super_edges_at(&graph.inner, id).map_err(to_py)
    }
}

impl Hierarchy {
    fn check(&self, id: u32) -> PyResult<()> {
        if self.inner.contains(id) {
            Ok(())
        } else {
            Err(to_py(Error::NotFound(format!("supernode {id}"))))
        }
    }
}

/// `pi(source, .)` by power iteration.
#[pyfunction]
#[pyo3(signature = (graph, source, alpha = 0.2, tolerance = ppr::DEFAULT_PI_TOLERANCE))]
fn ppr_vector(py: Python<'_>, graph: &Graph, source: usize, alpha: f64, tolerance: f64) -> PyResult<Vec<f64>> {
    let n = graph.inner.node_count();
    let params = PprParams {
        alpha,
        pi_tolerance: tolerance,
        ..PprParams::defaults(2, n)
    };
    params.validate().map_err(to_py)?;
    py.detach(|| ppr::ppr_single_source_pi(&graph.inner, &params, source))
        .map_err(to_py)
}

/// Per-node degree-normalized PageRank and the threshold `1/sqrt(k n)`.
#[pyfunction]
#[pyo3(signature = (graph, k, alpha = 0.2))]
fn dpr(py: Python<'_>, graph: &Graph, k: usize, alpha: f64) -> PyResult<(Vec<f64>, f64)> {
    let params = PprParams {
        alpha,
        ..PprParams::defaults(k, graph.inner.node_count())
    };
    params.validate().map_err(to_py)?;
    let index = py.detach(|| compute_dpr(&graph.inner, &params));
    Ok((index.tau, index.tau_star))
}

/// Mean of `d(s) pi(s, t)` over `s` in `a` and `t` in `b`.
#[pyfunction]
#[pyo3(signature = (graph, a, b, alpha = 0.2))]
fn exact_level_dppr(py: Python<'_>, graph: &Graph, a: Vec<u32>, b: Vec<u32>, alpha: f64) -> PyResult<f64> {
    let params = PprParams {
        alpha,
        ..PprParams::defaults(2, graph.inner.node_count())
    };
    py.detach(|| ppr::exact_level_dppr(&graph.inner, &params, &a, &b))
        .map_err(to_py)
}

/// DPPR matrix over the children of supernode `node`.
#[pyfunction]
#[pyo3(signature = (graph, hierarchy, node, engine = "taupush", seed = 0, alpha = 0.2, epsilon = None, delta = None))]
#[allow(clippy::too_many_arguments)]
fn estimate_dppr(
    py: Python<'_>,
    graph: &Graph,
    hierarchy: &Hierarchy,
    node: u32,
    engine: &str,
    seed: u64,
    alpha: f64,
    epsilon: Option<f64>,
    delta: Option<f64>,
) -> PyResult<Vec<Vec<f64>>> {
    let engine = parse_engine(engine)?;
    let g = &graph.inner;
    let h = &hierarchy.inner;
    let defaults = PprParams::defaults(h.k(), g.node_count());
    let params = PprParams {
        alpha,
        epsilon: epsilon.unwrap_or(defaults.epsilon),
        delta: delta.unwrap_or(defaults.delta),
        ..defaults
    };
    params.validate().map_err(to_py)?;
    py.detach(|| {
        let scope = Scope::from_hierarchy(h, node)?;
        let dpr = compute_dpr(g, &params);
        ppr::estimate_dppr(g, &scope, &dpr, &params, engine, GateMode::Mean, seed)
    })
    .map(|est| est.matrix)
    .map_err(to_py)
}

#[pyfunction]
fn dppr_to_pdist(z: f64, n: usize) -> PyResult<f64> {
    pdist::dppr_to_pdist(z, pdist::clamp_context(n)).map_err(to_py)
}

/// Symmetric PDist matrix from a square DPPR matrix.
#[pyfunction]
fn pdist_matrix(dppr: Vec<Vec<f64>>, n: usize) -> PyResult<Vec<Vec<f64>>> {
    build_pdist_matrix(&dppr, n).map(|m| m.rows()).map_err(to_py)
}

/// `(epsilon, delta)` for a `(theta, sigma)` PDist target.
#[pyfunction]
fn lemma1_params(theta: f64, sigma: f64) -> PyResult<(f64, f64)> {
    pdist::lemma1_params(theta, sigma).map_err(to_py)
}

/// Stress majorization of a distance matrix; returns a dict with
/// `coords`, `stress`, `iterations` and `loss_history`.
#[pyfunction]
#[pyo3(signature = (distances, seed = 0, max_iters = None, rel_tol = None))]
fn layout(
    py: Python<'_>,
    distances: Vec<Vec<f64>>,
    seed: u64,
    max_iters: Option<usize>,
    rel_tol: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let size = distances.len();
    let delta = PDistMatrix::from_rows(&distances, size.max(2)).map_err(to_py)?;
    let defaults = LayoutOptions::default();
    let opts = LayoutOptions {
        max_iters: max_iters.unwrap_or(defaults.max_iters),
        rel_tol: rel_tol.unwrap_or(defaults.rel_tol),
        seed,
    };
    let result = py.detach(|| stress_majorization(&delta, &opts)).map_err(to_py)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("coords", result.coords.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>())?;
    out.set_item("stress", result.stress)?;
    out.set_item("iterations", result.iterations)?;
    out.set_item("loss_history", result.loss_history)?;
    Ok(out.into_any().unbind())
}

fn points(coords: Vec<(f64, f64)>) -> Vec<Point> {
    coords.into_iter().map(|(x, y)| [x, y]).collect()
}

/// Sum of inverse squared pairwise distances; `inf` on coincident points.
#[pyfunction]
fn nd(coords: Vec<(f64, f64)>) -> PyResult<f64> {
    node_distribution(&points(coords)).map_err(to_py)
}

/// Coefficient of variation of edge lengths; `None` when undefined.
#[pyfunction]
fn ulcv(coords: Vec<(f64, f64)>, edges: Vec<(usize, usize)>) -> PyResult<Option<f64>> {
    let pts = points(coords);
    if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i >= pts.len() || j >= pts.len()) {
        return Err(PyValueError::new_err(format!(
            "edge ({i}, {j}) out of range for {} points",
            pts.len()
        )));
    }
    Ok(ulcv_of(&pts, &edges))
}

/// A preprocessed workspace directory.
#[pyclass(module = "pprviz_py", frozen)]
struct Workspace {
    inner: CoreWorkspace,
}

#[pymethods]
impl Workspace {
    /// Builds (or confirms) a workspace; returns `(workspace, "built" | "up-to-date")`.
    #[staticmethod]
    #[pyo3(signature = (input, out_dir, k = 25, symmetrize = false))]
    fn preprocess(py: Python<'_>, input: PathBuf, out_dir: PathBuf, k: usize, symmetrize: bool) -> PyResult<(Self, &'static str)> {
        let cfg = PreprocessConfig {
            symmetrize,
            ..PreprocessConfig::new(k)
        };
        let (inner, outcome) = py.detach(|| run_preprocess(&input, &out_dir, &cfg)).map_err(to_py)?;
        let label = match outcome {
            PreprocessOutcome::Built => "built",
            PreprocessOutcome::UpToDate => "up-to-date",
        };
        Ok((Self { inner }, label))
    }

    #[staticmethod]
    fn open(py: Python<'_>, dir: PathBuf) -> PyResult<Self> {
        let inner = py.detach(|| CoreWorkspace::open(&dir)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn root(&self) -> u32 {
        self.inner.hierarchy().root()
    }

    fn summary(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let text = serde_json::to_string(&self.inner.summary()).expect("summary serializes");
        json_loads(py, &text)
    }

    fn node(&self, py: Python<'_>, id: u32) -> PyResult<Py<PyAny>> {
        let info = self.inner.node_info(id).map_err(to_py)?;
        json_loads(py, &serde_json::to_string(&info).expect("node info serializes"))
    }

    fn default_seed(&self, id: u32) -> u64 {
        self.inner.default_seed(id)
    }

    /// Layout response as the same JSON text the CLI and service emit.
    #[pyo3(signature = (node = None, seed = None, engine = "taupush", timing = false))]
    fn visualize_json(&self, py: Python<'_>, node: Option<u32>, seed: Option<u64>, engine: &str, timing: bool) -> PyResult<String> {
        let opts = VisualizeOptions {
            seed,
            engine: parse_engine(engine)?,
            timing,
            ..VisualizeOptions::default()
        };
        let id = node.unwrap_or_else(|| self.inner.hierarchy().root());
        py.detach(|| self.inner.visualize(id, &opts))
            .map(|r| r.to_json())
            .map_err(to_py)
    }

    /// Layout response as a dict.
    #[pyo3(signature = (node = None, seed = None, engine = "taupush", timing = false))]
    fn visualize(&self, py: Python<'_>, node: Option<u32>, seed: Option<u64>, engine: &str, timing: bool) -> PyResult<Py<PyAny>> {
        let text = self.visualize_json(py, node, seed, engine, timing)?;
        json_loads(py, &text)
    }
}

#[pyfunction]
#[pyo3(signature = (n, attach, seed = 0))]
fn power_law_graph(n: usize, attach: usize, seed: u64) -> PyResult<Graph> {
    let inner = pprviz_core::generators::power_law(n, attach, seed).map_err(to_py)?;
    Ok(Graph { inner, labels: None })
}

#[pymodule]
pub fn pprviz_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Hierarchy>()?;
    m.add_class::<Workspace>()?;
    m.add_function(wrap_pyfunction!(ppr_vector, m)?)?;
    m.add_function(wrap_pyfunction!(dpr, m)?)?;
    m.add_function(wrap_pyfunction!(exact_level_dppr, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_dppr, m)?)?;
    m.add_function(wrap_pyfunction!(dppr_to_pdist, m)?)?;
    m.add_function(wrap_pyfunction!(pdist_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(lemma1_params, m)?)?;
    m.add_function(wrap_pyfunction!(layout, m)?)?;
    m.add_function(wrap_pyfunction!(nd, m)?)?;
    m.add_function(wrap_pyfunction!(ulcv, m)?)?;
    m.add_function(wrap_pyfunction!(power_law_graph, m)?)?;
    Ok(())
}
