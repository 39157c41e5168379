use crate::error::{Error, Result};
use crate::graph::DirectedGraph;

use super::PprParams;

/// Hard cap on power-iteration rounds; with alpha >= 1e-3 convergence to
/// any sane tolerance happens long before this.
const MAX_ROUNDS: usize = 100_000;

/// Iterates `x <- alpha * s + (1 - alpha) * x P` from `x = s` until the
/// largest entry change drops below `tolerance`. Linear in `s`, so `s` need
/// not be normalized.
pub fn ppr_from_distribution(
    graph: &DirectedGraph,
    alpha: f64,
    tolerance: f64,
    start: &[f64],
) -> Vec<f64> {
    let n = graph.node_count();
    assert_eq!(start.len(), n, "start vector length must equal node count");
    let mut x = start.to_vec();
    let mut next = vec![0.0; n];
    for _ in 0..MAX_ROUNDS {
        for (slot, &s) in next.iter_mut().zip(start) {
            *slot = alpha * s;
        }
        for u in 0..n as u32 {
            let mass = x[u as usize];
            if mass == 0.0 {
                continue;
            }
            let share = (1.0 - alpha) * mass / graph.out_degree(u) as f64;
            for &v in graph.out_neighbors(u) {
                next[v as usize] += share;
            }
        }
        let change = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        std::mem::swap(&mut x, &mut next);
        if change < tolerance {
            break;
        }
    }
    x
}

/// Near-exact `pi(source, .)` by power iteration.
pub fn ppr_single_source_pi(
    graph: &DirectedGraph,
    params: &PprParams,
    source: usize,
) -> Result<Vec<f64>> {
    let n = graph.node_count();
    if source >= n {
        return Err(Error::NodeOutOfRange { id: source, n });
    }
    let mut start = vec![0.0; n];
    start[source] = 1.0;
    Ok(ppr_from_distribution(
        graph,
        params.alpha,
        params.pi_tolerance,
        &start,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64) -> PprParams {
        PprParams {
            alpha,
            ..PprParams::defaults(5, 10)
        }
    }

    #[test]
    fn self_loop_singleton() {
        let g = DirectedGraph::from_edges(1, [(0, 0)]).unwrap();
        let pi = ppr_single_source_pi(&g, &params(0.2), 0).unwrap();
        assert!((pi[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_node_cycle_closed_form() {
        // even-length walks return to the source: alpha / (1 - (1-alpha)^2)
        let g = DirectedGraph::from_edges(2, [(0, 1), (1, 0)]).unwrap();
        let alpha = 0.2;
        let pi = ppr_single_source_pi(&g, &params(alpha), 0).unwrap();
        let denom = 1.0 - (1.0 - alpha) * (1.0 - alpha);
        assert!((pi[0] - alpha / denom).abs() < 1e-8);
        assert!((pi[1] - alpha * (1.0 - alpha) / denom).abs() < 1e-8);
        assert!((pi[0] - 0.555_555_555_6).abs() < 1e-8);
    }

    #[test]
    fn rows_sum_to_one() {
        let g = DirectedGraph::from_edges(5, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2)])
            .unwrap();
        for s in 0..5 {
            let pi = ppr_single_source_pi(&g, &params(0.15), s).unwrap();
            let total: f64 = pi.iter().sum();
            assert!((total - 1.0).abs() < 5.0 * 1e-9);
        }
    }

    #[test]
    fn source_out_of_range() {
        let g = DirectedGraph::from_edges(2, [(0, 1), (1, 0)]).unwrap();
        assert!(ppr_single_source_pi(&g, &params(0.2), 2).is_err());
    }
}
