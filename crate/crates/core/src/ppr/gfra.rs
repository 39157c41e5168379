use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::graph::DirectedGraph;

use super::push::gfp;
use super::scope::Scope;
use super::tau_push::{mean_degree, DpprEstimate, PushStats};
use super::PprParams;

/// Walk multiplier `W = (2 + 2 eps/3) ln(1/p_f) / (eps^2 delta)`.
pub fn gfra_walk_budget(params: &PprParams) -> f64 {
    let eps = params.epsilon;
    (2.0 + 2.0 * eps / 3.0) * (1.0 / params.p_f).ln() / (eps * eps * params.delta)
}

fn walk_seed(seed: u64, source: usize, walk: u64) -> u64 {
    // splitmix64 over the three keys
    let mut z = seed
        ^ (source as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ walk.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn random_walk(graph: &DirectedGraph, start: u32, alpha: f64, rng: &mut ChaCha8Rng) -> u32 {
    let mut v = start;
    while rng.gen::<f64>() >= alpha {
        let out = graph.out_neighbors(v);
        v = out[rng.gen_range(0..out.len())];
    }
    v
}

/// Adds the walk estimate of the residual mass to `row`. Runs
/// `ceil(r_sum * walks_per_unit)` walks; none when no residue is left.
fn refine_with_walks(
    graph: &DirectedGraph,
    scope: &Scope<'_>,
    alpha: f64,
    mut row: Vec<f64>,
    residues: &[(u32, f64)],
    walks_per_unit: f64,
    (seed, source): (u64, usize),
) -> (Vec<f64>, u64) {
    let r_sum: f64 = residues.iter().map(|&(_, r)| r).sum();
    if residues.is_empty() || r_sum <= 0.0 {
        return (row, 0);
    }
    let c = scope.len();
    let walks = (r_sum * walks_per_unit).ceil() as u64;
    let picker = WeightedIndex::new(residues.iter().map(|&(_, r)| r)).expect("positive residues");
    let counts = (0..walks)
        .into_par_iter()
        .fold(
            || vec![0u64; c],
            |mut acc, walk| {
                let mut rng = ChaCha8Rng::seed_from_u64(walk_seed(seed, source, walk));
                let start = residues[picker.sample(&mut rng)].0;
                let end = random_walk(graph, start, alpha, &mut rng);
                if let Some(j) = scope.child_of_leaf(end) {
                    acc[j] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; c],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    for (j, &hits) in counts.iter().enumerate() {
        row[j] += r_sum * hits as f64 / (walks as f64 * scope.leaf_count(j) as f64);
    }
    (row, walks)
}

/// GFP with a relaxed threshold, then residue-weighted random walks that
/// estimate the remaining mass. Deterministic for a fixed seed.
pub fn gfra(
    graph: &DirectedGraph,
    scope: &Scope<'_>,
    params: &PprParams,
    seed: u64,
) -> Result<DpprEstimate> {
    if scope.len() < 2 {
        return Err(crate::error::Error::Usage(format!(
            "a scope needs at least 2 children, got {}",
            scope.len()
        )));
    }
    params.validate()?;
    let c = scope.len();
    let w = gfra_walk_budget(params);
    let gamma = (0..c).map(|i| scope.leaf_count(i)).min().unwrap_or(1) as f64;
    let degree_sum: f64 = (0..c).map(|i| mean_degree(graph, scope.leaves(i))).sum();
    let m = graph.edge_count() as f64;
    let r_max = (gamma * degree_sum / (m * w)).sqrt();

    let rows = (0..c)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, PushStats)> {
            let state = gfp(graph, scope, i, params.alpha, r_max)?;
            let mut stats = PushStats {
                gfp_pushes: state.pushes,
                edge_ops: state.edge_ops,
                ..PushStats::default()
            };
            let residues: Vec<(u32, f64)> = state.residues().filter(|&(_, r)| r > 0.0).collect();
            let (row, walks) = refine_with_walks(
                graph,
                scope,
                params.alpha,
                state.estimates,
                &residues,
                w / gamma,
                (seed, i),
            );
            stats.walks = walks;
            Ok((row, stats))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut stats = PushStats::default();
    let matrix = rows
        .into_iter()
        .map(|(row, s)| {
            stats.absorb(&s);
            row
        })
        .collect();
    Ok(DpprEstimate { matrix, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_formula() {
        let mut p = PprParams::defaults(5, 100);
        p.epsilon = 0.5;
        p.delta = 0.02;
        p.p_f = (-1.0f64).exp();
        let expected = (2.0 + 1.0 / 3.0) / (0.25 * 0.02);
        assert!((gfra_walk_budget(&p) - expected).abs() < 1e-9);
    }

    #[test]
    fn walk_seeds_differ_by_key() {
        assert_ne!(walk_seed(1, 0, 0), walk_seed(1, 0, 1));
        assert_ne!(walk_seed(1, 0, 0), walk_seed(1, 1, 0));
        assert_ne!(walk_seed(1, 0, 0), walk_seed(2, 0, 0));
    }

    #[test]
    fn no_residue_means_no_walks() {
        let g = DirectedGraph::from_edges(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        let scope = Scope::singletons(3, vec![0, 1, 2]).unwrap();
        let row = vec![0.25, 0.5, 0.125];
        let (out, walks) = refine_with_walks(&g, &scope, 0.2, row.clone(), &[], 1e6, (1, 0));
        assert_eq!(walks, 0);
        assert_eq!(out, row);
    }

    #[test]
    fn same_seed_same_bits() {
        let g = DirectedGraph::from_edges(
            6,
            [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (2, 3), (3, 2)],
        )
        .unwrap();
        let p = PprParams::defaults(5, 6);
        let scope = Scope::singletons(6, (0..6).collect()).unwrap();
        let a = gfra(&g, &scope, &p, 7).unwrap();
        let b = gfra(&g, &scope, &p, 7).unwrap();
        for (ra, rb) in a.matrix.iter().zip(&b.matrix) {
            for (x, y) in ra.iter().zip(rb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
