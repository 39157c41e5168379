use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;

use super::dpr::DprIndex;
use super::gfra::gfra;
use super::power::ppr_from_distribution;
use super::push::{gbp, gfp};
use super::scope::Scope;
use super::PprParams;

/// How a child's DPR is aggregated for the backward-push gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    #[default]
    Mean,
    Max,
}

/// Which estimator fills the DPPR matrix of a scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[default]
    TauPush,
    GfpOnly,
    Gfra,
    PiOracle,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::TauPush, Engine::GfpOnly, Engine::Gfra, Engine::PiOracle];

    pub fn name(self) -> &'static str {
        match self {
            Engine::TauPush => "taupush",
            Engine::GfpOnly => "gfp-only",
            Engine::Gfra => "gfra",
            Engine::PiOracle => "pi-oracle",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Engine::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown engine '{s}' (expected taupush, gfp-only, gfra or pi-oracle)"
                ))
            })
    }
}

/// Work counters gathered while filling one matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushStats {
    pub gfp_pushes: u64,
    pub gbp_invocations: u64,
    pub gbp_pushes: u64,
    pub edge_ops: u64,
    pub cache_hits: u64,
    pub walks: u64,
}

impl PushStats {
    pub fn absorb(&mut self, other: &PushStats) {
        self.gfp_pushes += other.gfp_pushes;
        self.gbp_invocations += other.gbp_invocations;
        self.gbp_pushes += other.gbp_pushes;
        self.edge_ops += other.edge_ops;
        self.cache_hits += other.cache_hits;
        self.walks += other.walks;
    }
}

/// `matrix[i][j]` estimates the DPPR from child `i` to child `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpprEstimate {
    pub matrix: Vec<Vec<f64>>,
    pub stats: PushStats,
}

/// Forward threshold `eps * delta / (m * tau)`.
pub fn forward_threshold(graph: &DirectedGraph, params: &PprParams, tau: f64) -> f64 {
    params.epsilon * params.delta / (graph.edge_count() as f64 * tau)
}

pub(crate) fn mean_degree(graph: &DirectedGraph, leaves: &[u32]) -> f64 {
    let total: usize = leaves.iter().map(|&v| graph.out_degree(v)).sum();
    total as f64 / leaves.len() as f64
}

/// Backward threshold for target child `j`: `eps * delta` over the largest
/// mean leaf degree among the other children.
pub fn backward_threshold(
    graph: &DirectedGraph,
    scope: &Scope<'_>,
    j: usize,
    params: &PprParams,
) -> f64 {
    let worst = (0..scope.len())
        .filter(|&i| i != j)
        .map(|i| mean_degree(graph, scope.leaves(i)))
        .fold(0.0, f64::max);
    params.epsilon * params.delta / worst
}

fn check_scope(scope: &Scope<'_>) -> Result<()> {
    if scope.len() < 2 {
        return Err(Error::Usage(format!(
            "a scope needs at least 2 children, got {}",
            scope.len()
        )));
    }
    Ok(())
}

fn child_dpr(dpr: &DprIndex, leaves: &[u32], gate: GateMode) -> f64 {
    match gate {
        GateMode::Mean => dpr.mean_over(leaves),
        GateMode::Max => dpr.max_over(leaves),
    }
}

fn forward_rows(
    graph: &DirectedGraph,
    scope: &Scope<'_>,
    params: &PprParams,
    r_max: f64,
) -> Result<(Vec<Vec<f64>>, PushStats)> {
    let rows = (0..scope.len())
        .into_par_iter()
        .map(|i| gfp(graph, scope, i, params.alpha, r_max))
        .collect::<Result<Vec<_>>>()?;
    let mut stats = PushStats::default();
    let matrix = rows
        .into_iter()
        .map(|state| {
            stats.gfp_pushes += state.pushes;
            stats.edge_ops += state.edge_ops;
            state.estimates
        })
        .collect();
    Ok((matrix, stats))
}

/// Forward push from every child, then backward push into every child
/// whose DPR exceeds `1/sqrt(k n)`, overwriting the off-diagonal column.
pub fn tau_push(
    graph: &DirectedGraph,
    scope: &Scope<'_>,
    dpr: &DprIndex,
    params: &PprParams,
    gate: GateMode,
) -> Result<DpprEstimate> {
    check_scope(scope)?;
    params.validate()?;
    let tau = dpr.tau_star;
    let r_max = forward_threshold(graph, params, tau);
    let (mut matrix, mut stats) = forward_rows(graph, scope, params, r_max)?;

    let targets: Vec<usize> = (0..scope.len())
        .filter(|&j| child_dpr(dpr, scope.leaves(j), gate) > tau)
        .collect();
    let columns = targets
        .par_iter()
        .map(|&j| -> Result<(usize, Vec<f64>, PushStats)> {
            let r_b_max = backward_threshold(graph, scope, j, params);
            let mut local = PushStats {
                gbp_invocations: 1,
                ..PushStats::default()
            };
            if let Some(col) = cached_column(scope, dpr, j, r_b_max) {
                local.cache_hits = 1;
                return Ok((j, col, local));
            }
            let state = gbp(graph, scope, j, params.alpha, r_b_max)?;
            local.gbp_pushes = state.pushes;
            local.edge_ops = state.edge_ops;
            Ok((j, state.estimates, local))
        })
        .collect::<Result<Vec<_>>>()?;
    for (j, col, local) in columns {
        stats.absorb(&local);
        for (i, row) in matrix.iter_mut().enumerate() {
            if i != j {
                row[j] = col[i];
            }
        }
    }
    Ok(DpprEstimate { matrix, stats })
}

/// Column from the preprocessing cache, if it was computed for this exact
/// scope with a threshold at least as tight.
fn cached_column(scope: &Scope<'_>, dpr: &DprIndex, j: usize, r_b_max: f64) -> Option<Vec<f64>> {
    if !scope.children_are_leaves() {
        return None;
    }
    let id = scope.id()?;
    let cached = dpr.gbp_cache.get(&scope.child(j))?;
    if cached.scope != id || cached.r_b_max > r_b_max || cached.estimates.len() != scope.len() {
        return None;
    }
    let matches = cached
        .estimates
        .iter()
        .zip(scope.children())
        .all(|(&(leaf, _), &c)| leaf == c);
    matches.then(|| cached.estimates.iter().map(|&(_, e)| e).collect())
}

/// Forward push only, with the threshold set from the largest child DPR.
pub fn gfp_only(
    graph: &DirectedGraph,
    scope: &Scope<'_>,
    dpr: &DprIndex,
    params: &PprParams,
    gate: GateMode,
) -> Result<DpprEstimate> {
    check_scope(scope)?;
    params.validate()?;
    let tau = (0..scope.len())
        .map(|j| child_dpr(dpr, scope.leaves(j), gate))
        .fold(0.0, f64::max);
    if !(tau > 0.0) {
        return Err(Error::Invariant("scope has zero DPR".into()));
    }
    let r_max = forward_threshold(graph, params, tau);
    let (matrix, stats) = forward_rows(graph, scope, params, r_max)?;
    Ok(DpprEstimate { matrix, stats })
}

/// Near-exact matrix with one power iteration per leaf of the scope.
pub fn leafwise_pi(
    graph: &DirectedGraph,
    scope: &Scope<'_>,
    params: &PprParams,
) -> Result<DpprEstimate> {
    check_scope(scope)?;
    params.validate()?;
    let n = graph.node_count();
    let c = scope.len();
    let sources: Vec<(usize, u32)> = (0..c)
        .flat_map(|i| scope.leaves(i).iter().map(move |&s| (i, s)))
        .collect();
    let contributions: Vec<(usize, Vec<f64>)> = sources
        .into_par_iter()
        .map(|(i, s)| {
            let mut start = vec![0.0; n];
            start[s as usize] = 1.0;
            let x = ppr_from_distribution(graph, params.alpha, params.pi_tolerance, &start);
            let weight = graph.out_degree(s) as f64 / scope.leaf_count(i) as f64;
            let row = (0..c)
                .map(|j| {
                    let tl = scope.leaves(j);
                    weight * tl.iter().map(|&t| x[t as usize]).sum::<f64>() / tl.len() as f64
                })
                .collect();
            (i, row)
        })
        .collect();
    let mut matrix = vec![vec![0.0; c]; c];
    for (i, row) in contributions {
        for (slot, v) in matrix[i].iter_mut().zip(row) {
            *slot += v;
        }
    }
    Ok(DpprEstimate {
        matrix,
        stats: PushStats::default(),
    })
}

/// Dispatches to the selected engine. `seed` only affects GFRA.
pub fn estimate_dppr(
    graph: &DirectedGraph,
    scope: &Scope<'_>,
    dpr: &DprIndex,
    params: &PprParams,
    engine: Engine,
    gate: GateMode,
    seed: u64,
) -> Result<DpprEstimate> {
    match engine {
        Engine::TauPush => tau_push(graph, scope, dpr, params, gate),
        Engine::GfpOnly => gfp_only(graph, scope, dpr, params, gate),
        Engine::Gfra => gfra(graph, scope, params, seed),
        Engine::PiOracle => leafwise_pi(graph, scope, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppr::compute_dpr;

    #[test]
    fn engine_names_round_trip() {
        for e in Engine::ALL {
            assert_eq!(e.name().parse::<Engine>().unwrap(), e);
        }
        assert!("fora".parse::<Engine>().is_err());
    }

    #[test]
    fn single_child_scope_is_rejected() {
        let g = DirectedGraph::from_edges(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        let params = PprParams::defaults(5, 3);
        let dpr = compute_dpr(&g, &params);
        let scope = Scope::singletons(3, vec![1]).unwrap();
        for e in Engine::ALL {
            let err = estimate_dppr(&g, &scope, &dpr, &params, e, GateMode::Mean, 0).unwrap_err();
            assert!(matches!(err, Error::Usage(_)));
        }
    }

    #[test]
    fn backward_threshold_ignores_target_child() {
        // node 0 has degree 3, others degree 1
        let g = DirectedGraph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 0), (2, 0), (3, 0)])
            .unwrap();
        let params = PprParams::defaults(5, 4);
        let scope = Scope::singletons(4, vec![0, 1, 2, 3]).unwrap();
        let ed = params.epsilon * params.delta;
        assert!((backward_threshold(&g, &scope, 0, &params) - ed).abs() < 1e-15);
        assert!((backward_threshold(&g, &scope, 1, &params) - ed / 3.0).abs() < 1e-15);
    }
}
