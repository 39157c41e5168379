use proptest::prelude::*;

use pprviz_core::generators;
use pprviz_core::graph::DirectedGraph;
use pprviz_core::hierarchy::{build_hierarchy, modularity_gain, ModularityAccumulators};

fn undirected_strategy() -> impl Strategy<Value = (usize, Vec<(u32, u32)>)> {
    (2usize..=60).prop_flat_map(|n| {
        let pairs = prop::collection::vec((0..n as u32, 0..n as u32), 0..3 * n);
        (Just(n), pairs)
    })
}

fn symmetric(n: usize, pairs: &[(u32, u32)]) -> DirectedGraph {
    let edges = pairs
        .iter()
        .filter(|(u, v)| u != v)
        .flat_map(|&(u, v)| [(u, v), (v, u)]);
    DirectedGraph::from_edges(n, edges).unwrap()
}

/// Newman modularity of a node labelling, in arc units.
fn modularity(g: &DirectedGraph, label: &[usize]) -> f64 {
    let two_m = g.edge_count() as f64;
    let groups = label.iter().max().map_or(0, |&x| x + 1);
    let mut inside = vec![0.0; groups];
    let mut total = vec![0.0; groups];
    for (u, v) in g.edges() {
        total[label[u as usize]] += 1.0;
        if label[u as usize] == label[v as usize] {
            inside[label[u as usize]] += 1.0;
        }
    }
    (0..groups)
        .map(|c| inside[c] / two_m - (total[c] / two_m).powi(2))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hierarchy_shape_holds((n, pairs) in undirected_strategy(), k in 2usize..9) {
        let g = symmetric(n, &pairs);
        let h = build_hierarchy(&g, k).unwrap();
        prop_assert_eq!(h.leaf_count(), n);
        prop_assert!(h.children(h.root()).len() <= k);
        for level in 1..=h.levels() {
            let mut seen = vec![0u32; n];
            for id in h.nodes_at(level) {
                let children = h.children(id);
                prop_assert!(!children.is_empty() && children.len() <= k, "fanout {}", children.len());
                for &c in children {
                    prop_assert_eq!(h.parent(c), Some(id));
                    prop_assert_eq!(h.level_of(c), level - 1);
                }
                for &leaf in h.leaves(id) {
                    seen[leaf as usize] += 1;
                    prop_assert_eq!(h.ancestor_at(leaf, level), id);
                }
            }
            prop_assert!(seen.iter().all(|&s| s == 1), "level {} is not a partition", level);
        }
        prop_assert_eq!(h.leaves(h.root()).len(), n);
    }

    #[test]
    fn rebuilds_are_identical((n, pairs) in undirected_strategy(), k in 2usize..9) {
        let g = symmetric(n, &pairs);
        let a = build_hierarchy(&g, k).unwrap();
        let b = build_hierarchy(&g, k).unwrap();
        prop_assert_eq!(a.to_file(None), b.to_file(None));
    }

    #[test]
    fn gain_matches_brute_force_delta_q(
        (n, pairs) in undirected_strategy(),
        mover in 0usize..60,
        split in 1usize..60,
    ) {
        let g = symmetric(n, &pairs);
        prop_assume!(g.edge_count() > 0 && n >= 3);
        let mover = mover % n;
        // cluster C = first `split` nodes except the mover; others stay singletons
        let split = 1 + split % (n - 1);
        let in_c = |v: usize| v != mover && v < split.min(n);
        prop_assume!((0..n).any(in_c));
        let before: Vec<usize> = (0..n).map(|v| if in_c(v) { 0 } else { v + 1 }).collect();
        let mut after = before.clone();
        after[mover] = 0;

        let mut acc = ModularityAccumulators::default();
        for (u, v) in g.edges() {
            let (u, v) = (u as usize, v as usize);
            if in_c(u) {
                acc.w_in_target += 1.0;
                if in_c(v) {
                    acc.w_target += 1.0;
                }
            }
            if u == mover {
                acc.w_in_mover += 1.0;
            }
            if (u == mover && in_c(v)) || (v == mover && in_c(u)) {
                acc.w_cross += 1.0;
            }
        }
        let brute = modularity(&g, &after) - modularity(&g, &before);
        let gain = modularity_gain(&acc, g.edge_count() as f64 / 2.0);
        prop_assert!((gain - brute).abs() < 1e-12, "gain {} brute {}", gain, brute);
    }
}

#[test]
fn two_triangles_give_the_triangle_bipartition() {
    let g = generators::two_triangles();
    let h = build_hierarchy(&g, 3).unwrap();
    assert_eq!(h.levels(), 2);
    let mut parts: Vec<Vec<u32>> = h
        .nodes_at(1)
        .map(|id| {
            let mut l = h.leaves(id).to_vec();
            l.sort();
            l
        })
        .collect();
    parts.sort();
    assert_eq!(parts, vec![vec![0, 1, 2], vec![3, 4, 5]]);
    assert_eq!(h.children(h.root()).len(), 2);
}

#[test]
fn corpus_hierarchies_respect_fanout() {
    for (name, g) in generators::corpus() {
        for k in [5, 25] {
            let h = build_hierarchy(&g, k).unwrap();
            for level in 1..=h.levels() {
                for id in h.nodes_at(level) {
                    assert!(h.children(id).len() <= k, "{name} k={k}");
                }
            }
        }
    }
}
