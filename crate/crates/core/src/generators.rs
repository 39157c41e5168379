//! Small deterministic graph families. Every generator returns a symmetric
//! graph (each undirected edge in both directions).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;

fn symmetric(n: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<DirectedGraph> {
    let mut edges = Vec::new();
    for (u, v) in pairs {
        edges.push((u, v));
        edges.push((v, u));
    }
    DirectedGraph::from_edges(n, edges)
}

fn at_least(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        return Err(Error::InvalidParameter(format!("{what} needs at least {min} nodes, got {n}")));
    }
    Ok(())
}

pub fn path(n: usize) -> Result<DirectedGraph> {
    at_least(n, 2, "path")?;
    symmetric(n, (1..n as u32).map(|v| (v - 1, v)))
}

pub fn cycle(n: usize) -> Result<DirectedGraph> {
    at_least(n, 3, "cycle")?;
    symmetric(n, (0..n as u32).map(|v| (v, (v + 1) % n as u32)))
}

pub fn clique(n: usize) -> Result<DirectedGraph> {
    at_least(n, 2, "clique")?;
    let n32 = n as u32;
    symmetric(n, (0..n32).flat_map(|u| (u + 1..n32).map(move |v| (u, v))))
}

/// Node 0 joined to every other node.
pub fn star(n: usize) -> Result<DirectedGraph> {
    at_least(n, 2, "star")?;
    symmetric(n, (1..n as u32).map(|v| (0, v)))
}

/// Two triangles {0,1,2} and {3,4,5} joined by the edge 2-3.
pub fn two_triangles() -> DirectedGraph {
    symmetric(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]).unwrap()
}

/// Two equal blocks; pairs inside a block link with `p_in`, across with
/// `p_out`. Isolated nodes are tied to their block's first node.
pub fn two_block_sbm(n: usize, p_in: f64, p_out: f64, seed: u64) -> Result<DirectedGraph> {
    at_least(n, 4, "two-block SBM")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (n / 2) as u32;
    let block = |v: u32| v >= half;
    let mut pairs = Vec::new();
    let mut degree = vec![0usize; n];
    for u in 0..n as u32 {
        for v in u + 1..n as u32 {
            let p = if block(u) == block(v) { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                pairs.push((u, v));
                degree[u as usize] += 1;
                degree[v as usize] += 1;
            }
        }
    }
    for v in 0..n as u32 {
        if degree[v as usize] == 0 {
            let anchor = if block(v) { half } else { 0 };
            let other = if anchor == v { anchor + 1 } else { anchor };
            pairs.push((v, other));
        }
    }
    symmetric(n, pairs)
}

/// Preferential attachment: every new node links to `attach` distinct
/// earlier nodes picked proportionally to degree.
pub fn power_law(n: usize, attach: usize, seed: u64) -> Result<DirectedGraph> {
    if attach == 0 {
        return Err(Error::InvalidParameter("attach must be positive".into()));
    }
    at_least(n, attach + 1, "power-law graph")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    // endpoint pool: each node appears once per incident edge
    let mut pool: Vec<u32> = Vec::new();
    for v in 1..=attach as u32 {
        pairs.push((0, v));
        pool.extend([0, v]);
    }
    let mut picked = Vec::with_capacity(attach);
    for v in attach as u32 + 1..n as u32 {
        picked.clear();
        while picked.len() < attach {
            let u = pool[rng.gen_range(0..pool.len())];
            if !picked.contains(&u) {
                picked.push(u);
            }
        }
        for &u in &picked {
            pairs.push((u, v));
            pool.extend([u, v]);
        }
    }
    symmetric(n, pairs)
}

/// Mixed corpus of 10 to 500 nodes: paths, cycles, cliques, stars,
/// two-block SBMs and preferential-attachment graphs.
pub fn corpus() -> Vec<(String, DirectedGraph)> {
    let named = |name: &str, g: Result<DirectedGraph>| (name.to_string(), g.unwrap());
    vec![
        named("path-10", path(10)),
        named("path-80", path(80)),
        named("cycle-12", cycle(12)),
        named("cycle-150", cycle(150)),
        named("clique-10", clique(10)),
        named("clique-40", clique(40)),
        named("star-30", star(30)),
        named("star-200", star(200)),
        named("sbm-40", two_block_sbm(40, 0.3, 0.03, 11)),
        named("sbm-300", two_block_sbm(300, 0.06, 0.004, 12)),
        named("powerlaw-100", power_law(100, 2, 13)),
        named("powerlaw-500", power_law(500, 3, 14)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(path(10).unwrap().edge_count(), 18);
        assert_eq!(cycle(10).unwrap().edge_count(), 20);
        assert_eq!(clique(5).unwrap().edge_count(), 20);
        assert_eq!(star(6).unwrap().edge_count(), 10);
        assert_eq!(two_triangles().edge_count(), 14);
        let g = power_law(200, 2, 1).unwrap();
        assert_eq!(g.edge_count(), 2 * (2 + 2 * (200 - 3)));
    }

    #[test]
    fn generators_are_symmetric_and_seeded() {
        let a = two_block_sbm(40, 0.3, 0.02, 9).unwrap();
        let b = two_block_sbm(40, 0.3, 0.02, 9).unwrap();
        assert_eq!(a, b);
        for (u, v) in a.edges() {
            assert!(a.out_neighbors(v).contains(&u));
        }
        for v in 0..40 {
            assert!(!a.out_neighbors(v).contains(&v), "no isolated-node self-loops");
        }
    }
}
