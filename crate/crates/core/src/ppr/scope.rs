use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::hierarchy::SupergraphHierarchy;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
enum Lookup<'a> {
    Tree {
        hierarchy: &'a SupergraphHierarchy,
        scope: u32,
        child_level: usize,
    },
    Dense(Vec<u32>),
}

/// The set of sibling (super)nodes being visualized together: the children
/// of one supernode, or an explicit list of leaves treated as singletons.
#[derive(Debug, Clone)]
pub struct Scope<'a> {
    id: Option<u32>,
    children: Vec<u32>,
    leaf_store: Cow<'a, [u32]>,
    ranges: Vec<(usize, usize)>,
    lookup: Lookup<'a>,
}

impl<'a> Scope<'a> {
    /// Children of `id` in `hierarchy`.
    pub fn from_hierarchy(hierarchy: &'a SupergraphHierarchy, id: u32) -> Result<Self> {
        if !hierarchy.contains(id) {
            return Err(Error::NotFound(format!("supernode {id}")));
        }
        if hierarchy.is_leaf(id) {
            return Err(Error::Usage(format!("supernode {id} is a leaf")));
        }
        let children = hierarchy.children(id).to_vec();
        let order = hierarchy.order();
        let ranges = children
            .iter()
            .map(|&c| {
                let span = hierarchy.leaf_span(c);
                (span.start, span.end)
            })
            .collect();
        Ok(Self {
            id: Some(id),
            children,
            leaf_store: Cow::Borrowed(order),
            ranges,
            lookup: Lookup::Tree {
                hierarchy,
                scope: id,
                child_level: hierarchy.level_of(id) - 1,
            },
        })
    }

    /// Every listed leaf as its own singleton child.
    pub fn singletons(node_count: usize, leaves: Vec<u32>) -> Result<Self> {
        let mut dense = vec![NONE; node_count];
        for (i, &v) in leaves.iter().enumerate() {
            let slot = dense
                .get_mut(v as usize)
                .ok_or(Error::NodeOutOfRange {
                    id: v as usize,
                    n: node_count,
                })?;
            if *slot != NONE {
                return Err(Error::InvalidParameter(format!("leaf {v} listed twice")));
            }
            *slot = i as u32;
        }
        let ranges = (0..leaves.len()).map(|i| (i, i + 1)).collect();
        Ok(Self {
            id: None,
            children: leaves.clone(),
            leaf_store: Cow::Owned(leaves),
            ranges,
            lookup: Lookup::Dense(dense),
        })
    }

    /// The supernode whose children these are, if any.
    pub fn id(&self) -> Option<u32> {
        self.id
    }

    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    pub fn child(&self, i: usize) -> u32 {
        self.children[i]
    }

    pub fn children(&self) -> &[u32] {
        &self.children
    }

    /// True when every child is a graph node rather than a supernode.
    pub fn children_are_leaves(&self) -> bool {
        match &self.lookup {
            Lookup::Tree { child_level, .. } => *child_level == 0,
            Lookup::Dense(_) => true,
        }
    }

    pub fn leaves(&self, i: usize) -> &[u32] {
        let (a, b) = self.ranges[i];
        &self.leaf_store[a..b]
    }

    pub fn leaf_count(&self, i: usize) -> usize {
        let (a, b) = self.ranges[i];
        b - a
    }

    /// Index of the child containing `leaf`, if the leaf is inside the scope.
    #[inline]
    pub fn child_of_leaf(&self, leaf: u32) -> Option<usize> {
        match &self.lookup {
            Lookup::Tree {
                hierarchy,
                scope,
                child_level,
            } => {
                let anc = hierarchy.ancestor_at(leaf, *child_level);
                (hierarchy.parent(anc) == Some(*scope))
                    .then(|| hierarchy.rank_in_parent(anc) as usize)
            }
            Lookup::Dense(map) => {
                let i = map[leaf as usize];
                (i != NONE).then_some(i as usize)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedGraph;
    use crate::hierarchy::build_hierarchy;

    #[test]
    fn hierarchy_scope_maps_leaves() {
        let edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];
        let g = DirectedGraph::from_edges(6, edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)]))
            .unwrap();
        let h = build_hierarchy(&g, 5).unwrap();
        let s = Scope::from_hierarchy(&h, h.root()).unwrap();
        assert_eq!(s.len(), 2);
        for i in 0..2 {
            assert_eq!(s.leaf_count(i), 3);
            for &v in s.leaves(i) {
                assert_eq!(s.child_of_leaf(v), Some(i));
            }
        }
        let inner = Scope::from_hierarchy(&h, s.child(0)).unwrap();
        assert!(inner.children_are_leaves());
        assert_eq!(inner.child_of_leaf(4), None);
        assert!(Scope::from_hierarchy(&h, 0).is_err());
        assert!(Scope::from_hierarchy(&h, 99).is_err());
    }

    #[test]
    fn singleton_scope() {
        let s = Scope::singletons(5, vec![3, 1]).unwrap();
        assert_eq!(s.child_of_leaf(1), Some(1));
        assert_eq!(s.child_of_leaf(0), None);
        assert_eq!(s.leaves(0), &[3]);
        assert!(Scope::singletons(2, vec![0, 0]).is_err());
        assert!(Scope::singletons(2, vec![5]).is_err());
    }
}
