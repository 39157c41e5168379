//! Supergraph hierarchy built with a size-constrained Louvain variant.
//!
//! Supernode IDs are global: leaves keep their dense graph IDs `0..n`,
//! level-1 supernodes follow, then level 2, and so on up to a single root.
//! Clustering works on the undirected view of the graph where a non-loop
//! edge contributes one arc in each direction and a self-loop contributes
//! weight 2 to its node, so the total arc weight is `2 * m_undirected`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;

/// Sweep cap for one clustering pass.
pub const MAX_SWEEPS: usize = 20;

/// Counters for one candidate move, all measured in arc units over the
/// undirected leaf graph.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ModularityAccumulators {
    /// Arc weight with both endpoints inside the target cluster.
    pub w_target: f64,
    /// Arc weight incident to the target cluster (its degree sum).
    pub w_in_target: f64,
    /// Arc weight incident to the moving supernode.
    pub w_in_mover: f64,
    /// Arc weight crossing between mover and target, both directions.
    pub w_cross: f64,
}

/// Modularity change from moving a supernode into a cluster.
///
/// `m_undirected` is the number of undirected leaf edges. Because the gain
/// is linear in the mover's counters, the gain of merging a whole cluster
/// equals the sum over its members, which is also what this returns when
/// handed the cluster's aggregated counters.
pub fn modularity_gain(acc: &ModularityAccumulators, m_undirected: f64) -> f64 {
    if m_undirected <= 0.0 {
        return 0.0;
    }
    let two_m = 2.0 * m_undirected;
    let after = (acc.w_target + acc.w_cross) / two_m
        - ((acc.w_in_target + acc.w_in_mover) / two_m).powi(2);
    let before = acc.w_target / two_m
        - (acc.w_in_target / two_m).powi(2)
        - (acc.w_in_mover / two_m).powi(2);
    after - before
}

/// Weighted undirected graph over the supernodes of one level.
struct LevelGraph {
    /// `adj[a][b]` = arc weight between `a` and `b` (`b != a`), per direction.
    adj: Vec<BTreeMap<u32, f64>>,
    /// Internal arc weight of each node.
    internal: Vec<f64>,
    /// Degree sum of each node.
    degree: Vec<f64>,
}

impl LevelGraph {
    fn project(arcs: &[(u32, u32, f64)], member_of: &[u32], count: usize) -> Self {
        let mut adj: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); count];
        let mut internal = vec![0.0; count];
        let mut degree = vec![0.0; count];
        for &(u, v, w) in arcs {
            let (a, b) = (member_of[u as usize], member_of[v as usize]);
            degree[a as usize] += w;
            if a == b {
                internal[a as usize] += w;
            } else {
                *adj[a as usize].entry(b).or_insert(0.0) += w;
            }
        }
        Self {
            adj,
            internal,
            degree,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PassMode {
    PositiveGain,
    AnyGain,
}

/// One Louvain+ pass over a level graph; returns the cluster of each node.
fn louvain_plus_pass(level: &LevelGraph, k: usize, m_und: f64, mode: PassMode) -> Vec<u32> {
    let c = level.adj.len();
    let mut adj = level.adj.clone();
    let mut internal = level.internal.clone();
    let mut total = level.degree.clone();
    let mut size = vec![1usize; c];
    let mut alive = vec![true; c];
    // union-find style forwarding to the surviving cluster
    let mut merged_into: Vec<u32> = (0..c as u32).collect();

    for _ in 0..MAX_SWEEPS {
        let mut moved = false;
        // a cluster that absorbed others this sweep waits for the next one
        let mut grown = vec![false; c];
        for s in 0..c {
            if !alive[s] || grown[s] || adj[s].is_empty() {
                continue;
            }
            let target = if adj[s].len() == 1 {
                let (&t, _) = adj[s].iter().next().unwrap();
                (size[s] + size[t as usize] <= k).then_some(t)
            } else {
                let mut best: Option<(u32, f64)> = None;
                for (&t, &w_cross_one_way) in &adj[s] {
                    if size[s] + size[t as usize] > k {
                        continue;
                    }
                    let acc = ModularityAccumulators {
                        w_target: internal[t as usize],
                        w_in_target: total[t as usize],
                        w_in_mover: total[s],
                        w_cross: 2.0 * w_cross_one_way,
                    };
                    let gain = modularity_gain(&acc, m_und);
                    // strict '>' keeps the lowest target ID on ties
                    if best.is_none_or(|(_, g)| gain > g) {
                        best = Some((t, gain));
                    }
                }
                match (best, mode) {
                    (Some((t, g)), PassMode::PositiveGain) if g > 0.0 => Some(t),
                    (Some((t, _)), PassMode::AnyGain) => Some(t),
                    _ => None,
                }
            };
            let Some(t) = target else { continue };
            let t = t as usize;
            // merge s into t
            let s_adj = std::mem::take(&mut adj[s]);
            let w_st = s_adj.get(&(t as u32)).copied().unwrap_or(0.0);
            for (&x, &w) in &s_adj {
                let x = x as usize;
                adj[x].remove(&(s as u32));
                if x == t {
                    continue;
                }
                *adj[t].entry(x as u32).or_insert(0.0) += w;
                *adj[x].entry(t as u32).or_insert(0.0) += w;
            }
            internal[t] += internal[s] + 2.0 * w_st;
            total[t] += total[s];
            size[t] += size[s];
            alive[s] = false;
            grown[t] = true;
            merged_into[s] = t as u32;
            moved = true;
        }
        if !moved {
            break;
        }
    }

    let mut assignment = vec![0u32; c];
    for a in 0..c {
        let mut r = a;
        while merged_into[r] as usize != r {
            r = merged_into[r] as usize;
        }
        assignment[a] = r as u32;
    }
    assignment
}

/// Singletons whose every neighbor sits in a full cluster cannot move. They
/// are grouped by the cluster of their heaviest neighbor, in bins of at most
/// `k` and ascending ID, so they share a parent with their co-neighbors.
fn group_stranded(level: &LevelGraph, assignment: &mut [u32], k: usize) {
    let c = assignment.len();
    let mut size = vec![0usize; c];
    for &rep in assignment.iter() {
        size[rep as usize] += 1;
    }
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for a in 0..c {
        let stranded = size[assignment[a] as usize] == 1
            && !level.adj[a].is_empty()
            && level.adj[a]
                .keys()
                .all(|&b| size[assignment[b as usize] as usize] + 1 > k);
        if !stranded {
            continue;
        }
        let mut heaviest: Option<(u32, f64)> = None;
        for (&b, &w) in &level.adj[a] {
            if heaviest.is_none_or(|(_, hw)| w > hw) {
                heaviest = Some((b, w));
            }
        }
        let (b, _) = heaviest.expect("stranded node has a neighbor");
        groups.entry(assignment[b as usize]).or_default().push(a);
    }
    for members in groups.values() {
        for bin in members.chunks(k) {
            for &a in bin {
                assignment[a] = bin[0] as u32;
            }
        }
    }
}

/// Groups clusters into bins of at most `k` members in ascending order.
fn pack(c: usize, k: usize) -> Vec<u32> {
    (0..c).map(|a| (a / k * k) as u32).collect()
}

/// Renumbers cluster representatives to `0..count`, ordered by smallest member.
fn compact(assignment: &[u32]) -> (Vec<u32>, usize) {
    let mut label: BTreeMap<u32, u32> = BTreeMap::new();
    let mut out = Vec::with_capacity(assignment.len());
    for &rep in assignment {
        let next = label.len() as u32;
        out.push(*label.entry(rep).or_insert(next));
    }
    let count = label.len();
    (out, count)
}

/// Bounded-fanout tree over the graph's nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupergraphHierarchy {
    k: usize,
    leaf_count: usize,
    /// Global ID of the first node at each level, plus a final sentinel.
    level_offsets: Vec<u32>,
    parent: Vec<u32>,
    rank_in_parent: Vec<u32>,
    child_offsets: Vec<u32>,
    children: Vec<u32>,
    order: Vec<u32>,
    leaf_range: Vec<(u32, u32)>,
    /// `ancestors[l - 1][leaf]` = global ID of the leaf's level-`l` ancestor.
    ancestors: Vec<Vec<u32>>,
}

const NO_PARENT: u32 = u32::MAX;

/// On-disk form of the hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyFile {
    pub k: usize,
    pub levels: usize,
    pub parent: Vec<Vec<u32>>,
    pub order: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remap: Option<Vec<u64>>,
}

impl SupergraphHierarchy {
    /// Assembles the tree from per-level parent arrays. `parents[l][i]` is
    /// the local index at level `l + 1` of the `i`-th node at level `l`.
    pub fn from_parent_arrays(k: usize, parents: Vec<Vec<u32>>) -> Result<Self> {
        if parents.is_empty() {
            return Err(Error::InvalidParameter("hierarchy has no levels".into()));
        }
        let leaf_count = parents[0].len();
        let mut sizes = vec![leaf_count];
        for (l, p) in parents.iter().enumerate() {
            if p.len() != sizes[l] {
                return Err(Error::InvalidParameter(format!(
                    "parent array {l} has {} entries, expected {}",
                    p.len(),
                    sizes[l]
                )));
            }
            let next = p.iter().map(|&x| x as usize + 1).max().unwrap_or(0);
            let mut seen = vec![false; next];
            for &x in p {
                seen[x as usize] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::InvalidParameter(format!(
                    "level {} has a supernode without children",
                    l + 1
                )));
            }
            sizes.push(next);
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidParameter("top level must be a single root".into()));
        }

        let mut level_offsets = vec![0u32];
        for s in &sizes {
            level_offsets.push(level_offsets.last().unwrap() + *s as u32);
        }
        let total = *level_offsets.last().unwrap() as usize;
        let mut parent = vec![NO_PARENT; total];
        for (l, p) in parents.iter().enumerate() {
            let base = level_offsets[l] as usize;
            let up = level_offsets[l + 1];
            for (i, &x) in p.iter().enumerate() {
                parent[base + i] = up + x;
            }
        }

        let mut child_count = vec![0u32; total + 1];
        for &p in &parent {
            if p != NO_PARENT {
                child_count[p as usize + 1] += 1;
            }
        }
        let mut child_offsets = child_count;
        for i in 0..total {
            child_offsets[i + 1] += child_offsets[i];
        }
        let mut cursor = child_offsets.clone();
        let mut children = vec![0u32; total.saturating_sub(1)];
        let mut rank_in_parent = vec![0u32; total];
        for id in 0..total {
            let p = parent[id];
            if p == NO_PARENT {
                continue;
            }
            let slot = cursor[p as usize] as usize;
            rank_in_parent[id] = slot as u32 - child_offsets[p as usize];
            children[slot] = id as u32;
            cursor[p as usize] += 1;
        }

        let mut h = Self {
            k,
            leaf_count,
            level_offsets,
            parent,
            rank_in_parent,
            child_offsets,
            children,
            order: Vec::with_capacity(leaf_count),
            leaf_range: vec![(0, 0); total],
            ancestors: Vec::new(),
        };
        h.fill_order(h.root());

        let levels = h.levels();
        let mut ancestors: Vec<Vec<u32>> = Vec::with_capacity(levels);
        let mut current: Vec<u32> = (0..leaf_count as u32).collect();
        for _ in 0..levels {
            current = current.iter().map(|&x| h.parent[x as usize]).collect();
            ancestors.push(current.clone());
        }
        h.ancestors = ancestors;
        h.check_fanout()?;
        Ok(h)
    }

    fn fill_order(&mut self, root: u32) {
        // iterative DFS; children visited in ascending ID
        let mut stack = vec![(root, false)];
        while let Some((id, done)) = stack.pop() {
            if (id as usize) < self.leaf_count {
                let pos = self.order.len() as u32;
                self.order.push(id);
                self.leaf_range[id as usize] = (pos, pos + 1);
                continue;
            }
            if done {
                let kids = self.children(id);
                let start = self.leaf_range[kids[0] as usize].0;
                let end = self.leaf_range[*kids.last().unwrap() as usize].1;
                self.leaf_range[id as usize] = (start, end);
                continue;
            }
            stack.push((id, true));
            let kids: Vec<u32> = self.children(id).to_vec();
            for &c in kids.iter().rev() {
                stack.push((c, false));
            }
        }
    }

    fn check_fanout(&self) -> Result<()> {
        for id in self.leaf_count as u32..self.node_total() as u32 {
            let c = self.children(id).len();
            if c == 0 || c > self.k {
                return Err(Error::InvalidParameter(format!(
                    "supernode {id} has {c} children (k = {})",
                    self.k
                )));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Number of levels above the leaves; the root sits at this level.
    pub fn levels(&self) -> usize {
        self.level_offsets.len() - 2
    }

    /// Total number of nodes in the tree, leaves included.
    pub fn node_total(&self) -> usize {
        *self.level_offsets.last().unwrap() as usize
    }

    pub fn root(&self) -> u32 {
        self.node_total() as u32 - 1
    }

    pub fn contains(&self, id: u32) -> bool {
        (id as usize) < self.node_total()
    }

    pub fn is_leaf(&self, id: u32) -> bool {
        (id as usize) < self.leaf_count
    }

    pub fn level_of(&self, id: u32) -> usize {
        self.level_offsets.partition_point(|&o| o <= id) - 1
    }

    /// Global IDs of all nodes at `level`.
    pub fn nodes_at(&self, level: usize) -> std::ops::Range<u32> {
        self.level_offsets[level]..self.level_offsets[level + 1]
    }

    pub fn parent(&self, id: u32) -> Option<u32> {
        let p = self.parent[id as usize];
        (p != NO_PARENT).then_some(p)
    }

    /// Position of `id` within its parent's child list.
    pub fn rank_in_parent(&self, id: u32) -> u32 {
        self.rank_in_parent[id as usize]
    }

    pub fn children(&self, id: u32) -> &[u32] {
        let id = id as usize;
        let (a, b) = (self.child_offsets[id], self.child_offsets[id + 1]);
        &self.children[a as usize..b as usize]
    }

    /// Leaf set `F(id)` as a slice of the DFS leaf order.
    pub fn leaves(&self, id: u32) -> &[u32] {
        let (a, b) = self.leaf_range[id as usize];
        &self.order[a as usize..b as usize]
    }

    /// Position of `F(id)` within [`Self::order`].
    pub fn leaf_span(&self, id: u32) -> std::ops::Range<usize> {
        let (a, b) = self.leaf_range[id as usize];
        a as usize..b as usize
    }

    pub fn leaf_count_of(&self, id: u32) -> usize {
        let (a, b) = self.leaf_range[id as usize];
        (b - a) as usize
    }

    /// Ancestor of a leaf at `level` (`level == 0` returns the leaf).
    #[inline]
    pub fn ancestor_at(&self, leaf: u32, level: usize) -> u32 {
        if level == 0 {
            leaf
        } else {
            self.ancestors[level - 1][leaf as usize]
        }
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// Directed super-edges among the children of `parent`, as child IDs.
    pub fn super_edges_at(&self, graph: &DirectedGraph, parent: u32) -> Result<Vec<(u32, u32)>> {
        if !self.contains(parent) {
            return Err(Error::NotFound(format!("supernode {parent}")));
        }
        if self.is_leaf(parent) {
            return Err(Error::Usage(format!("supernode {parent} is a leaf")));
        }
        let child_level = self.level_of(parent) - 1;
        let parent_level = child_level + 1;
        let mut pairs = Vec::new();
        for &u in self.leaves(parent) {
            let a = self.ancestor_at(u, child_level);
            for &v in graph.out_neighbors(u) {
                if self.ancestor_at(v, parent_level) != parent {
                    continue;
                }
                let b = self.ancestor_at(v, child_level);
                if a != b {
                    pairs.push((a, b));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(pairs)
    }

    pub fn to_file(&self, remap: Option<Vec<u64>>) -> HierarchyFile {
        let parent = (0..self.levels())
            .map(|l| {
                let up = self.level_offsets[l + 1];
                self.nodes_at(l)
                    .map(|id| self.parent[id as usize] - up)
                    .collect()
            })
            .collect();
        HierarchyFile {
            k: self.k,
            levels: self.levels(),
            parent,
            order: self.order.clone(),
            remap,
        }
    }

    pub fn from_file(file: &HierarchyFile) -> Result<Self> {
        if file.parent.len() != file.levels {
            return Err(Error::InvalidParameter("levels does not match parent arrays".into()));
        }
        let h = Self::from_parent_arrays(file.k, file.parent.clone())?;
        if h.order != file.order {
            return Err(Error::InvalidParameter("leaf order does not match tree".into()));
        }
        Ok(h)
    }

    pub fn save_json(&self, path: &Path, remap: Option<Vec<u64>>) -> Result<()> {
        let text = serde_json::to_string(&self.to_file(remap)).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<(Self, HierarchyFile)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: HierarchyFile = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok((Self::from_file(&file)?, file))
    }
}

/// Builds the hierarchy with Louvain+ over the undirected view of `graph`.
///
/// Visit order is ascending cluster ID and gain ties go to the lowest target
/// ID, so the result is a deterministic function of the graph and `k`.
pub fn build_hierarchy(graph: &DirectedGraph, k: usize) -> Result<SupergraphHierarchy> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be at least 2, got {k}")));
    }
    let n = graph.node_count();
    let undirected = graph.undirected_edges();
    let m_und = undirected.len() as f64;
    let mut arcs = Vec::with_capacity(undirected.len() * 2);
    for &(u, v) in &undirected {
        if u == v {
            arcs.push((u, u, 2.0));
        } else {
            arcs.push((u, v, 1.0));
            arcs.push((v, u, 1.0));
        }
    }

    let mut parents: Vec<Vec<u32>> = Vec::new();
    let mut member_of: Vec<u32> = (0..n as u32).collect();
    let mut count = n;
    while count > k {
        let level = LevelGraph::project(&arcs, &member_of, count);
        let mut assignment = louvain_plus_pass(&level, k, m_und, PassMode::PositiveGain);
        group_stranded(&level, &mut assignment, k);
        let (mut next, mut next_count) = compact(&assignment);
        if next_count == count {
            assignment = louvain_plus_pass(&level, k, m_und, PassMode::AnyGain);
            (next, next_count) = compact(&assignment);
        }
        if next_count == count {
            (next, next_count) = compact(&pack(count, k));
        }
        for m in member_of.iter_mut() {
            *m = next[*m as usize];
        }
        parents.push(next);
        count = next_count;
    }
    parents.push(vec![0; count]);
    SupergraphHierarchy::from_parent_arrays(k, parents)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(u32, u32)]) -> DirectedGraph {
        let sym = edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)]);
        DirectedGraph::from_edges(n, sym).unwrap()
    }

    #[test]
    fn gain_with_all_counters_zero() {
        let acc = ModularityAccumulators::default();
        assert_eq!(modularity_gain(&acc, 5.0), 0.0);
    }

    #[test]
    fn gain_negative_without_crossing_edges() {
        let acc = ModularityAccumulators {
            w_target: 10.0,
            w_in_target: 12.0,
            w_in_mover: 3.0,
            w_cross: 0.0,
        };
        assert!(modularity_gain(&acc, 20.0) < 0.0);
    }

    #[test]
    fn small_graph_is_single_level() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let h = build_hierarchy(&g, 25).unwrap();
        assert_eq!(h.levels(), 1);
        assert_eq!(h.children(h.root()), &[0, 1, 2, 3, 4]);
        assert_eq!(h.leaf_count_of(h.root()), 5);
    }

    #[test]
    fn two_triangles_split() {
        let g = graph(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        let h = build_hierarchy(&g, 5).unwrap();
        assert_eq!(h.levels(), 2);
        let level1: Vec<Vec<u32>> = h
            .nodes_at(1)
            .map(|id| {
                let mut l = h.leaves(id).to_vec();
                l.sort();
                l
            })
            .collect();
        assert_eq!(level1, vec![vec![0, 1, 2], vec![3, 4, 5]]);
    }

    #[test]
    fn star_respects_fanout() {
        let edges: Vec<(u32, u32)> = (1..=30).map(|i| (0, i)).collect();
        let g = graph(31, &edges);
        let h = build_hierarchy(&g, 25).unwrap();
        assert!(h.levels() >= 2);
        for id in h.nodes_at(1) {
            assert!(h.children(id).len() <= 25);
        }
    }

    #[test]
    fn disconnected_nodes_get_packed() {
        // ten isolated self-loop nodes: no modularity moves are possible
        let g = DirectedGraph::from_edges(10, std::iter::empty()).unwrap();
        let h = build_hierarchy(&g, 3).unwrap();
        for id in h.leaf_count() as u32..h.node_total() as u32 {
            let c = h.children(id).len();
            assert!((1..=3).contains(&c));
        }
        assert!(h.children(h.root()).len() <= 3);
    }

    #[test]
    fn rejects_small_k() {
        let g = graph(2, &[(0, 1)]);
        assert!(build_hierarchy(&g, 1).is_err());
    }

    #[test]
    fn super_edges_between_joined_triangles() {
        let g = graph(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]);
        let h = build_hierarchy(&g, 5).unwrap();
        let root = h.root();
        let kids = h.children(root).to_vec();
        assert_eq!(kids.len(), 2);
        let edges = h.super_edges_at(&g, root).unwrap();
        assert_eq!(edges, vec![(kids[0], kids[1]), (kids[1], kids[0])]);
        assert!(matches!(h.super_edges_at(&g, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn single_child_has_no_super_edges() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let h = SupergraphHierarchy::from_parent_arrays(3, vec![vec![0, 0, 0], vec![0]]).unwrap();
        let mid = h.nodes_at(1).start;
        assert_eq!(h.children(h.root()), &[mid]);
        assert!(h.super_edges_at(&g, h.root()).unwrap().is_empty());
    }

    #[test]
    fn file_round_trip() {
        let g = graph(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]);
        let h = build_hierarchy(&g, 2).unwrap();
        let file = h.to_file(Some((0..6).collect()));
        let text = serde_json::to_string(&file).unwrap();
        for key in ["\"k\"", "\"levels\"", "\"parent\"", "\"order\"", "\"remap\""] {
            assert!(text.contains(key), "{key} missing");
        }
        let back: HierarchyFile = serde_json::from_str(&text).unwrap();
        assert_eq!(SupergraphHierarchy::from_file(&back).unwrap(), h);
    }
}
