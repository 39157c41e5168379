//! Grouped forward push (from every leaf of a source child at once) and
//! grouped backward push (into every leaf of a target child at once).
//!
//! Both keep a FIFO frontier of nodes whose residue exceeds the threshold;
//! a node already waiting in the frontier is not enqueued again. A push
//! zeroes the node's residue before distributing it, so self-loops keep
//! their share.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;

use super::scope::Scope;

/// Estimates per child of the scope plus the leaf residues left behind.
#[derive(Debug, Clone)]
pub struct ResidueState {
    /// Aggregated estimate per child, indexed by position in the scope.
    pub estimates: Vec<f64>,
    residues: Vec<f64>,
    touched: Vec<u32>,
    touched_flag: Vec<bool>,
    /// Number of push operations performed.
    pub pushes: u64,
    /// Adjacency entries visited across all pushes.
    pub edge_ops: u64,
    /// Residue converted to estimate mass, counting leaves outside the scope.
    pub converted_mass: f64,
    /// Residue mass at initialization.
    pub initial_mass: f64,
}

impl ResidueState {
    fn new(n: usize, children: usize) -> Self {
        Self {
            estimates: vec![0.0; children],
            residues: vec![0.0; n],
            touched: Vec::new(),
            touched_flag: vec![false; n],
            pushes: 0,
            edge_ops: 0,
            converted_mass: 0.0,
            initial_mass: 0.0,
        }
    }

    #[inline]
    fn add(&mut self, v: u32, amount: f64) -> f64 {
        let slot = &mut self.residues[v as usize];
        *slot += amount;
        if !self.touched_flag[v as usize] {
            self.touched_flag[v as usize] = true;
            self.touched.push(v);
        }
        *slot
    }

    pub fn residue(&self, v: u32) -> f64 {
        self.residues[v as usize]
    }

    /// Non-zero residues in first-touch order.
    pub fn residues(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.touched
            .iter()
            .map(|&v| (v, self.residues[v as usize]))
            .filter(|&(_, r)| r != 0.0)
    }

    pub fn residue_sum(&self) -> f64 {
        self.residues().map(|(_, r)| r).sum()
    }
}

fn check_threshold(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

fn check_child(scope: &Scope<'_>, i: usize) -> Result<()> {
    if i < scope.len() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "child index {i} out of range for scope of {} children",
            scope.len()
        )))
    }
}

/// Grouped forward push from one child of the scope.
pub struct ForwardPush<'a> {
    graph: &'a DirectedGraph,
    scope: &'a Scope<'a>,
    alpha: f64,
    r_max: f64,
    state: ResidueState,
    queue: VecDeque<u32>,
    queued: Vec<bool>,
}

impl<'a> ForwardPush<'a> {
    /// Seeds residue `d(v) / |F(source)|` on every leaf of the source child.
    pub fn new(
        graph: &'a DirectedGraph,
        scope: &'a Scope<'a>,
        source: usize,
        alpha: f64,
        r_max: f64,
    ) -> Result<Self> {
        check_threshold("r_max", r_max)?;
        check_child(scope, source)?;
        let n = graph.node_count();
        let mut fp = Self {
            graph,
            scope,
            alpha,
            r_max,
            state: ResidueState::new(n, scope.len()),
            queue: VecDeque::new(),
            queued: vec![false; n],
        };
        let leaves = scope.leaves(source);
        let size = leaves.len() as f64;
        for &v in leaves {
            let r = graph.out_degree(v) as f64 / size;
            fp.state.initial_mass += r;
            fp.state.add(v, r);
            fp.enqueue_if_active(v);
        }
        Ok(fp)
    }

    #[inline]
    fn enqueue_if_active(&mut self, v: u32) {
        if !self.queued[v as usize]
            && self.state.residues[v as usize] > self.graph.out_degree(v) as f64 * self.r_max
        {
            self.queued[v as usize] = true;
            self.queue.push_back(v);
        }
    }

    /// Performs one push; returns false once no residue exceeds its threshold.
    pub fn step(&mut self) -> bool {
        let Some(v) = self.queue.pop_front() else {
            return false;
        };
        self.queued[v as usize] = false;
        let r = self.state.residues[v as usize];
        let degree = self.graph.out_degree(v);
        let converted = self.alpha * r;
        if let Some(j) = self.scope.child_of_leaf(v) {
            self.state.estimates[j] += converted / self.scope.leaf_count(j) as f64;
        }
        self.state.converted_mass += converted;
        self.state.residues[v as usize] = 0.0;
        let share = (1.0 - self.alpha) * r / degree as f64;
        for &w in self.graph.out_neighbors(v) {
            self.state.add(w, share);
            self.enqueue_if_active(w);
        }
        self.state.pushes += 1;
        self.state.edge_ops += degree as u64;
        true
    }

    /// Runs at most `limit` pushes and returns how many were done.
    pub fn run_pushes(&mut self, limit: usize) -> usize {
        let mut done = 0;
        while done < limit && self.step() {
            done += 1;
        }
        done
    }

    pub fn run(mut self) -> ResidueState {
        while self.step() {}
        self.state
    }

    pub fn state(&self) -> &ResidueState {
        &self.state
    }
}

/// Grouped backward push into one child of the scope.
pub struct BackwardPush<'a> {
    graph: &'a DirectedGraph,
    scope: &'a Scope<'a>,
    alpha: f64,
    r_b_max: f64,
    state: ResidueState,
    queue: VecDeque<u32>,
    queued: Vec<bool>,
}

impl<'a> BackwardPush<'a> {
    /// Seeds residue `1 / |F(target)|` on every leaf of the target child.
    pub fn new(
        graph: &'a DirectedGraph,
        scope: &'a Scope<'a>,
        target: usize,
        alpha: f64,
        r_b_max: f64,
    ) -> Result<Self> {
        check_threshold("r_b_max", r_b_max)?;
        check_child(scope, target)?;
        let n = graph.node_count();
        let mut bp = Self {
            graph,
            scope,
            alpha,
            r_b_max,
            state: ResidueState::new(n, scope.len()),
            queue: VecDeque::new(),
            queued: vec![false; n],
        };
        let leaves = scope.leaves(target);
        let r = 1.0 / leaves.len() as f64;
        for &v in leaves {
            bp.state.initial_mass += r;
            bp.state.add(v, r);
            bp.enqueue_if_active(v);
        }
        Ok(bp)
    }

    #[inline]
    fn enqueue_if_active(&mut self, v: u32) {
        if !self.queued[v as usize] && self.state.residues[v as usize] > self.r_b_max {
            self.queued[v as usize] = true;
            self.queue.push_back(v);
        }
    }

    pub fn step(&mut self) -> bool {
        let Some(v) = self.queue.pop_front() else {
            return false;
        };
        self.queued[v as usize] = false;
        let r = self.state.residues[v as usize];
        if let Some(i) = self.scope.child_of_leaf(v) {
            let gained = self.alpha * self.graph.out_degree(v) as f64 * r;
            self.state.estimates[i] += gained / self.scope.leaf_count(i) as f64;
        }
        self.state.converted_mass += self.alpha * r;
        self.state.residues[v as usize] = 0.0;
        let spread = (1.0 - self.alpha) * r;
        let in_neighbors = self.graph.in_neighbors(v);
        for &u in in_neighbors {
            self.state.add(u, spread / self.graph.out_degree(u) as f64);
            self.enqueue_if_active(u);
        }
        self.state.pushes += 1;
        self.state.edge_ops += in_neighbors.len() as u64;
        true
    }

    pub fn run_pushes(&mut self, limit: usize) -> usize {
        let mut done = 0;
        while done < limit && self.step() {
            done += 1;
        }
        done
    }

    pub fn run(mut self) -> ResidueState {
        while self.step() {}
        self.state
    }

    pub fn state(&self) -> &ResidueState {
        &self.state
    }
}

/// Grouped forward push from child `source` until every residue satisfies
/// `r(v) <= d(v) * r_max`.
pub fn gfp(
    graph: &DirectedGraph,
    scope: &Scope<'_>,
    source: usize,
    alpha: f64,
    r_max: f64,
) -> Result<ResidueState> {
    Ok(ForwardPush::new(graph, scope, source, alpha, r_max)?.run())
}

/// Grouped backward push into child `target` until every residue is at most
/// `r_b_max`.
pub fn gbp(
    graph: &DirectedGraph,
    scope: &Scope<'_>,
    target: usize,
    alpha: f64,
    r_b_max: f64,
) -> Result<ResidueState> {
    Ok(BackwardPush::new(graph, scope, target, alpha, r_b_max)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// v0 -> {v1, v2, v3}; v1 -> v4, v2 -> {v5, v4}... shaped after the
    /// textbook push walk-through: only the first push is asserted.
    fn fan_graph() -> DirectedGraph {
        DirectedGraph::from_edges(
            8,
            [
                (0, 1),
                (0, 2),
                (0, 3),
                (1, 4),
                (2, 5),
                (2, 6),
                (3, 6),
                (3, 7),
                (4, 0),
                (5, 0),
                (6, 0),
                (7, 0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn first_forward_push_splits_residue() {
        let g = fan_graph();
        let scope = Scope::singletons(8, (0..8).collect()).unwrap();
        let mut fp = ForwardPush::new(&g, &scope, 0, 0.1, 1e-6).unwrap();
        assert!((fp.state().residue(0) - 3.0).abs() < 1e-15);
        assert!(fp.step());
        let s = fp.state();
        assert!((s.estimates[0] - 0.3).abs() < 1e-12);
        for v in 1..=3 {
            assert!((s.residue(v) - 0.9).abs() < 1e-12);
        }
        assert_eq!(s.residue(0), 0.0);
    }

    #[test]
    fn first_backward_push_splits_by_in_neighbor_degree() {
        // target v10 has in-neighbors v5 (out-degree 2) and v6 (out-degree 1)
        let g = DirectedGraph::from_edges(11, [(5, 10), (5, 0), (6, 10), (10, 10)]).unwrap();
        let scope = Scope::singletons(11, vec![10, 5, 6]).unwrap();
        let mut bp = BackwardPush::new(&g, &scope, 0, 0.1, 1e-6).unwrap();
        assert!(bp.step());
        let s = bp.state();
        assert!((s.residue(5) - 0.45).abs() < 1e-12);
        assert!((s.residue(6) - 0.9).abs() < 1e-12);
        // self-loop of v10 feeds back 0.9 / d(v10) = 0.9
        assert!((s.residue(10) - 0.9).abs() < 1e-12);
        assert!((s.estimates[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn large_threshold_means_no_pushes() {
        let g = fan_graph();
        let scope = Scope::singletons(8, (0..8).collect()).unwrap();
        let s = gfp(&g, &scope, 0, 0.2, 1.0 / 3.0 * 3.0).unwrap();
        assert_eq!(s.pushes, 0);
        assert!(s.estimates.iter().all(|&e| e == 0.0));
        assert_eq!(s.residue(0), 3.0);

        let s = gbp(&g, &scope, 0, 0.2, 1.0).unwrap();
        assert_eq!(s.pushes, 0);
        assert_eq!(s.residue(0), 1.0);
    }

    #[test]
    fn thresholds_must_be_positive() {
        let g = fan_graph();
        let scope = Scope::singletons(8, (0..8).collect()).unwrap();
        assert!(gfp(&g, &scope, 0, 0.2, 0.0).is_err());
        assert!(gbp(&g, &scope, 0, 0.2, -1.0).is_err());
        assert!(gfp(&g, &scope, 9, 0.2, 0.1).is_err());
    }

    #[test]
    fn termination_leaves_residues_below_threshold() {
        let g = fan_graph();
        let scope = Scope::singletons(8, (0..8).collect()).unwrap();
        let r_max = 1e-4;
        let s = gfp(&g, &scope, 2, 0.2, r_max).unwrap();
        for (v, r) in s.residues() {
            assert!(r <= g.out_degree(v) as f64 * r_max);
        }
        let s = gbp(&g, &scope, 2, 0.2, r_max).unwrap();
        for (_, r) in s.residues() {
            assert!(r <= r_max);
        }
    }

    #[test]
    fn forward_mass_is_conserved() {
        let g = fan_graph();
        let scope = Scope::singletons(8, (0..8).collect()).unwrap();
        let mut fp = ForwardPush::new(&g, &scope, 0, 0.2, 1e-7).unwrap();
        let initial = fp.state().initial_mass;
        let mut last = fp.state().residue_sum();
        while fp.step() {
            let s = fp.state();
            let sum = s.residue_sum();
            assert!(sum < last);
            last = sum;
            assert!((s.converted_mass + sum - initial).abs() < 1e-12);
        }
    }
}
