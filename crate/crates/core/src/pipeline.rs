//! Preprocessing into a workspace directory and per-supernode visualization.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{load_edge_list, DirectedGraph};
use crate::hierarchy::{build_hierarchy, SupergraphHierarchy};
use crate::layout::{normalize_layout, stress_majorization, LayoutOptions, Point};
use crate::metrics::{check_theorem_bounds, layout_metrics, LayoutMetrics, MetricReport};
use crate::pdist::build_pdist_matrix;
use crate::ppr::{compute_dpr, estimate_dppr, DprIndex, Engine, GateMode, PprParams, PushStats, Scope};

pub const GRAPH_FILE: &str = "graph.bin";
pub const HIERARCHY_FILE: &str = "hierarchy.json";
pub const DPR_FILE: &str = "dpr.bin";
pub const GBP_DIR: &str = "gbp";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: u32 = 1;
pub const DEFAULT_SINGLE_LEVEL_LIMIT: usize = 3000;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn json_error(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |source| Error::Json {
        path: path.to_path_buf(),
        source,
    }
}

/// Inputs to preprocessing other than the edge list itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub k: usize,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    /// Add the reverse of every edge while loading.
    pub symmetrize: bool,
}

impl PreprocessConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            alpha: None,
            epsilon: None,
            delta: None,
            symmetrize: false,
        }
    }

    pub fn params(&self, n: usize) -> Result<PprParams> {
        if self.k < 2 {
            return Err(Error::InvalidParameter(format!("k must be at least 2, got {}", self.k)));
        }
        let mut p = PprParams::defaults(self.k, n);
        if let Some(a) = self.alpha {
            p.alpha = a;
        }
        if let Some(e) = self.epsilon {
            p.epsilon = e;
        }
        if let Some(d) = self.delta {
            p.delta = d;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub input: String,
    pub input_sha256: String,
    pub symmetrize: bool,
    pub params: PprParams,
    pub n: usize,
    pub m: usize,
    pub levels: usize,
    pub root: u32,
    pub gbp_cache_entries: usize,
    /// Workspace-relative path to SHA-256 of the file.
    pub files: BTreeMap<String, String>,
    /// Digest over `files`, used to derive default layout seeds.
    pub content_hash: String,
    pub created_unix_secs: u64,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(json_error(path))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(json_error(path))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn same_inputs(&self, input_sha: &str, cfg: &PreprocessConfig, params: &PprParams) -> bool {
        self.format == MANIFEST_FORMAT
            && self.input_sha256 == input_sha
            && self.symmetrize == cfg.symmetrize
            && self.params == *params
    }

    /// Re-hashes every listed file and reports the first mismatch.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (name, expected) in &self.files {
            let actual = hash_file(&dir.join(name))?;
            if &actual != expected {
                return Err(Error::Format {
                    path: dir.join(name),
                    msg: "content hash does not match manifest".into(),
                });
            }
        }
        Ok(())
    }
}

fn content_hash(files: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (name, digest) in files {
        h.update(name.as_bytes());
        h.update(b":");
        h.update(digest.as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreprocessOutcome {
    Built,
    UpToDate,
}

/// Loads the edge list, builds hierarchy, DPR and backward-push cache, and
/// writes them with a manifest. Does nothing when the manifest already
/// matches the input and parameters.
pub fn preprocess(
    input: &Path,
    out_dir: &Path,
    cfg: &PreprocessConfig,
) -> Result<(Workspace, PreprocessOutcome)> {
    if cfg.k < 2 {
        return Err(Error::InvalidParameter(format!("k must be at least 2, got {}", cfg.k)));
    }
    let raw = fs::read(input).map_err(|e| Error::io(input, e))?;
    let input_sha = sha256_hex(&raw);
    let manifest_path = out_dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        if let Ok(old) = Manifest::load(&manifest_path) {
            if let Ok(params) = cfg.params(old.n) {
                if old.same_inputs(&input_sha, cfg, &params) && old.verify(out_dir).is_ok() {
                    return Ok((Workspace::open(out_dir)?, PreprocessOutcome::UpToDate));
                }
            }
        }
    }

    let loaded = load_edge_list(input, cfg.symmetrize)?;
    let graph = loaded.graph;
    let n = graph.node_count();
    let params = cfg.params(n)?;
    let hierarchy = build_hierarchy(&graph, cfg.k)?;
    let mut dpr = compute_dpr(&graph, &params);
    dpr.build_gbp_cache(&graph, &hierarchy, &params)?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    graph.save_binary(&out_dir.join(GRAPH_FILE))?;
    let remap = loaded.remap;
    hierarchy.save_json(&out_dir.join(HIERARCHY_FILE), Some(remap.clone()))?;
    dpr.save(&out_dir.join(DPR_FILE), &out_dir.join(GBP_DIR))?;

    let mut files = BTreeMap::new();
    for name in [GRAPH_FILE, HIERARCHY_FILE, DPR_FILE] {
        files.insert(name.to_string(), hash_file(&out_dir.join(name))?);
    }
    for &target in dpr.gbp_cache.keys() {
        let name = format!("{GBP_DIR}/{target}.bin");
        files.insert(name.clone(), hash_file(&out_dir.join(&name))?);
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        input: input.display().to_string(),
        input_sha256: input_sha,
        symmetrize: cfg.symmetrize,
        params,
        n,
        m: graph.edge_count(),
        levels: hierarchy.levels(),
        root: hierarchy.root(),
        gbp_cache_entries: dpr.gbp_cache.len(),
        content_hash: content_hash(&files),
        files,
        created_unix_secs: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    manifest.save(&manifest_path)?;
    Ok((
        Workspace {
            dir: out_dir.to_path_buf(),
            manifest,
            graph,
            hierarchy,
            dpr,
            remap,
        },
        PreprocessOutcome::Built,
    ))
}

/// Knobs of a single visualization request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualizeOptions {
    /// Layout (and GFRA) seed; `None` derives one from the workspace.
    pub seed: Option<u64>,
    pub engine: Engine,
    pub gate: GateMode,
    pub timing: bool,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for VisualizeOptions {
    fn default() -> Self {
        let layout = LayoutOptions::default();
        Self {
            seed: None,
            engine: Engine::TauPush,
            gate: GateMode::Mean,
            timing: false,
            max_iters: layout.max_iters,
            rel_tol: layout.rel_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildInfo {
    pub id: u64,
    pub leaf_count: usize,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub dppr_ms: f64,
    pub pdist_ms: f64,
    pub layout_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualizationResponse {
    /// `None` for a single-level view of the whole graph.
    pub supernode: Option<u32>,
    pub level: usize,
    pub engine: Engine,
    pub seed: u64,
    pub children: Vec<ChildInfo>,
    /// Normalized coordinates, one per child.
    pub coords: Vec<Point>,
    /// Directed super-edges as pairs of child IDs.
    pub super_edges: Vec<[u64; 2]>,
    pub stress: f64,
    pub iterations: usize,
    pub metrics: Option<MetricReport>,
    pub layout_metrics: Option<LayoutMetrics>,
    pub stats: PushStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl VisualizationResponse {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }

    /// Super-edges as index pairs into `children`.
    pub fn edge_indices(&self) -> Vec<(usize, usize)> {
        let pos: BTreeMap<u64, usize> = self
            .children
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id, i))
            .collect();
        self.super_edges
            .iter()
            .map(|[a, b]| (pos[a], pos[b]))
            .collect()
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

struct Rendered {
    coords: Vec<Point>,
    stress: f64,
    iterations: usize,
    metrics: MetricReport,
    layout_metrics: LayoutMetrics,
    stats: PushStats,
    timing: Timing,
}

impl Rendered {
    fn fill(self, response: &mut VisualizationResponse, with_timing: bool) {
        response.coords = self.coords;
        response.stress = self.stress;
        response.iterations = self.iterations;
        response.metrics = Some(self.metrics);
        response.layout_metrics = Some(self.layout_metrics);
        response.stats = self.stats;
        response.timing = with_timing.then_some(self.timing);
    }
}

/// DPPR estimate, distance matrix, layout and metrics for one scope.
/// `edges` are index pairs into the scope's children.
#[allow(clippy::too_many_arguments)]
fn lay_out_scope(
    graph: &DirectedGraph,
    scope: &Scope<'_>,
    dpr: &DprIndex,
    params: &PprParams,
    edges: &[(usize, usize)],
    bound_stats: (usize, usize),
    seed: u64,
    opts: &VisualizeOptions,
) -> Result<Rendered> {
    let t0 = Instant::now();
    let estimate = estimate_dppr(graph, scope, dpr, params, opts.engine, opts.gate, seed)?;
    let dppr_ms = ms_since(t0);
    let t1 = Instant::now();
    let delta = build_pdist_matrix(&estimate.matrix, graph.node_count())?;
    let pdist_ms = dppr_ms + ms_since(t1);
    let t2 = Instant::now();
    let layout = stress_majorization(
        &delta,
        &LayoutOptions {
            max_iters: opts.max_iters,
            rel_tol: opts.rel_tol,
            seed,
        },
    )?;
    let coords = normalize_layout(&layout.coords);
    let layout_ms = ms_since(t2);
    let metrics = check_theorem_bounds(&delta, edges, bound_stats.0, bound_stats.1, params.alpha)?;
    let layout_metrics = layout_metrics(&coords, edges)?;
    Ok(Rendered {
        coords,
        stress: layout.stress,
        iterations: layout.iterations,
        metrics,
        layout_metrics,
        stats: estimate.stats,
        timing: Timing {
            dppr_ms,
            pdist_ms,
            layout_ms,
        },
    })
}

/// A preprocessed workspace, loaded read-only.
#[derive(Debug)]
pub struct Workspace {
    dir: PathBuf,
    manifest: Manifest,
    graph: DirectedGraph,
    hierarchy: SupergraphHierarchy,
    dpr: DprIndex,
    remap: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySummary {
    pub root: u32,
    pub levels: usize,
    pub k: usize,
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeChild {
    pub id: u32,
    pub leaf_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub id: u32,
    pub level: usize,
    pub parent: Option<u32>,
    pub leaf_count: usize,
    pub children: Vec<NodeChild>,
}

impl Workspace {
    /// Opens a workspace after checking every file against the manifest.
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            return Err(Error::NotFound(format!(
                "{} (run preprocess first)",
                manifest_path.display()
            )));
        }
        let manifest = Manifest::load(&manifest_path)?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Format {
                path: manifest_path,
                msg: format!("unsupported manifest format {}", manifest.format),
            });
        }
        manifest.verify(dir)?;
        let graph = DirectedGraph::load_binary(&dir.join(GRAPH_FILE))?;
        let hierarchy_path = dir.join(HIERARCHY_FILE);
        let (hierarchy, file) = SupergraphHierarchy::load_json(&hierarchy_path)?;
        let dpr = DprIndex::load(&dir.join(DPR_FILE), &dir.join(GBP_DIR))?;
        if hierarchy.leaf_count() != graph.node_count() || dpr.tau.len() != graph.node_count() {
            return Err(Error::Format {
                path: dir.to_path_buf(),
                msg: "graph, hierarchy and DPR sizes disagree".into(),
            });
        }
        let remap = file
            .remap
            .unwrap_or_else(|| (0..graph.node_count() as u64).collect());
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            graph,
            hierarchy,
            dpr,
            remap,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn hierarchy(&self) -> &SupergraphHierarchy {
        &self.hierarchy
    }

    pub fn dpr(&self) -> &DprIndex {
        &self.dpr
    }

    pub fn params(&self) -> &PprParams {
        &self.manifest.params
    }

    /// Original (input-file) ID of a leaf.
    pub fn original_id(&self, leaf: u32) -> u64 {
        self.remap[leaf as usize]
    }

    pub fn summary(&self) -> HierarchySummary {
        HierarchySummary {
            root: self.hierarchy.root(),
            levels: self.hierarchy.levels(),
            k: self.hierarchy.k(),
            n: self.graph.node_count(),
            m: self.graph.edge_count(),
        }
    }

    fn check_id(&self, id: u32) -> Result<()> {
        if self.hierarchy.contains(id) {
            Ok(())
        } else {
            Err(Error::NotFound(format!("supernode {id}")))
        }
    }

    pub fn node_info(&self, id: u32) -> Result<NodeInfo> {
        self.check_id(id)?;
        let h = &self.hierarchy;
        Ok(NodeInfo {
            id,
            level: h.level_of(id),
            parent: h.parent(id),
            leaf_count: h.leaf_count_of(id),
            children: h
                .children(id)
                .iter()
                .map(|&c| NodeChild {
                    id: c,
                    leaf_count: h.leaf_count_of(c),
                })
                .collect(),
        })
    }

    /// Default seed for a supernode: first 8 bytes of
    /// SHA-256(content hash, id).
    pub fn default_seed(&self, id: u32) -> u64 {
        let mut h = Sha256::new();
        h.update(self.manifest.content_hash.as_bytes());
        h.update(id.to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    fn label(&self, id: u32) -> String {
        if self.hierarchy.is_leaf(id) {
            self.original_id(id).to_string()
        } else {
            format!("L{}:{}", self.hierarchy.level_of(id), id)
        }
    }

    /// Lays out the children of supernode `id`.
    pub fn visualize(&self, id: u32, opts: &VisualizeOptions) -> Result<VisualizationResponse> {
        self.check_id(id)?;
        let h = &self.hierarchy;
        if h.is_leaf(id) {
            return Err(Error::Usage(format!(
                "node {id} is a leaf and has no children to lay out"
            )));
        }
        let seed = opts.seed.unwrap_or_else(|| self.default_seed(id));
        let children: Vec<ChildInfo> = h
            .children(id)
            .iter()
            .map(|&c| ChildInfo {
                id: c as u64,
                leaf_count: h.leaf_count_of(c),
                label: self.label(c),
            })
            .collect();
        let pairs = h.super_edges_at(&self.graph, id)?;
        let super_edges: Vec<[u64; 2]> = pairs.iter().map(|&(a, b)| [a as u64, b as u64]).collect();
        let mut response = VisualizationResponse {
            supernode: Some(id),
            level: h.level_of(id),
            engine: opts.engine,
            seed,
            children,
            coords: vec![[0.0, 0.0]],
            super_edges,
            stress: 0.0,
            iterations: 0,
            metrics: None,
            layout_metrics: None,
            stats: PushStats::default(),
            timing: None,
        };
        if response.children.len() < 2 {
            if opts.timing {
                response.timing = Some(Timing {
                    dppr_ms: 0.0,
                    pdist_ms: 0.0,
                    layout_ms: 0.0,
                });
            }
            return Ok(response);
        }
        let scope = Scope::from_hierarchy(h, id)?;
        let edges: Vec<(usize, usize)> = pairs
            .iter()
            .map(|&(a, b)| (h.rank_in_parent(a) as usize, h.rank_in_parent(b) as usize))
            .collect();
        let bound_stats = (scope.len(), edges.len());
        lay_out_scope(
            &self.graph,
            &scope,
            &self.dpr,
            &self.manifest.params,
            &edges,
            bound_stats,
            seed,
            opts,
        )?
        .fill(&mut response, opts.timing);
        Ok(response)
    }
}

/// Lays out every node of a small graph as its own point. ND and ULCV bounds
/// are checked with the graph's own `n` and `m`.
pub fn visualize_single_level(
    graph: &DirectedGraph,
    labels: Option<&[u64]>,
    params: &PprParams,
    opts: &VisualizeOptions,
    limit: usize,
) -> Result<VisualizationResponse> {
    let n = graph.node_count();
    if n > limit {
        return Err(Error::Usage(format!(
            "single-level mode is limited to {limit} nodes but the graph has {n}; \
             preprocess it and use the multi-level mode instead"
        )));
    }
    params.validate()?;
    let seed = opts.seed.unwrap_or(crate::layout::DEFAULT_SEED);
    let children: Vec<ChildInfo> = (0..n as u64)
        .map(|v| ChildInfo {
            id: v,
            leaf_count: 1,
            label: labels.map_or(v, |l| l[v as usize]).to_string(),
        })
        .collect();
    let pairs: Vec<(u32, u32)> = graph.edges().filter(|(u, v)| u != v).collect();
    let mut response = VisualizationResponse {
        supernode: None,
        level: 0,
        engine: opts.engine,
        seed,
        children,
        coords: vec![[0.0, 0.0]; n.min(1)],
        super_edges: pairs.iter().map(|&(u, v)| [u as u64, v as u64]).collect(),
        stress: 0.0,
        iterations: 0,
        metrics: None,
        layout_metrics: None,
        stats: PushStats::default(),
        timing: None,
    };
    if n < 2 {
        return Ok(response);
    }
    let dpr = compute_dpr(graph, params);
    let scope = Scope::singletons(n, (0..n as u32).collect())?;
    let edges: Vec<(usize, usize)> = pairs.iter().map(|&(u, v)| (u as usize, v as usize)).collect();
    lay_out_scope(
        graph,
        &scope,
        &dpr,
        params,
        &edges,
        (n, graph.edge_count()),
        seed,
        opts,
    )?
    .fill(&mut response, opts.timing);
    Ok(response)
}
