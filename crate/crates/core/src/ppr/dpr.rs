use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::hierarchy::SupergraphHierarchy;

use super::power::ppr_from_distribution;
use super::push::gbp;
use super::scope::Scope;
use super::tau_push::backward_threshold;
use super::PprParams;

const DPR_MAGIC: &[u8; 6] = b"PVDPR1";
const GBP_MAGIC: &[u8; 6] = b"PVGBP1";

/// Precomputed backward-push column for one high-DPR leaf target, valid for
/// the level-1 scope the target belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedColumn {
    pub scope: u32,
    pub r_b_max: f64,
    /// `(sibling leaf, estimate)` pairs, ascending by leaf.
    pub estimates: Vec<(u32, f64)>,
}

/// Degree-normalized PageRank of every leaf plus the backward-push cache.
#[derive(Debug, Clone, PartialEq)]
pub struct DprIndex {
    pub tau: Vec<f64>,
    pub tau_star: f64,
    pub gbp_cache: BTreeMap<u32, CachedColumn>,
}

/// One power iteration seeded with `d(v)/m` yields every leaf's DPR.
pub fn compute_dpr(graph: &DirectedGraph, params: &PprParams) -> DprIndex {
    let n = graph.node_count();
    let m = graph.edge_count() as f64;
    let start: Vec<f64> = (0..n as u32)
        .map(|v| graph.out_degree(v) as f64 / m)
        .collect();
    let tau = ppr_from_distribution(graph, params.alpha, params.pi_tolerance, &start);
    DprIndex {
        tau,
        tau_star: 1.0 / ((params.k * n) as f64).sqrt(),
        gbp_cache: BTreeMap::new(),
    }
}

fn le_u64(bytes: &[u8], at: usize) -> Option<u64> {
    bytes
        .get(at..at + 8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
}

fn le_f64(bytes: &[u8], at: usize) -> Option<f64> {
    le_u64(bytes, at).map(f64::from_bits)
}

impl DprIndex {
    /// Mean leaf DPR over a leaf set.
    pub fn mean_over(&self, leaves: &[u32]) -> f64 {
        if leaves.is_empty() {
            return 0.0;
        }
        leaves.iter().map(|&v| self.tau[v as usize]).sum::<f64>() / leaves.len() as f64
    }

    pub fn max_over(&self, leaves: &[u32]) -> f64 {
        leaves
            .iter()
            .map(|&v| self.tau[v as usize])
            .fold(0.0, f64::max)
    }

    /// Runs GBP from every leaf with DPR above `tau_star` inside its
    /// level-1 scope and stores the resulting columns.
    pub fn build_gbp_cache(
        &mut self,
        graph: &DirectedGraph,
        hierarchy: &SupergraphHierarchy,
        params: &PprParams,
    ) -> Result<usize> {
        self.gbp_cache.clear();
        let mut scopes: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for leaf in 0..hierarchy.leaf_count() as u32 {
            if self.tau[leaf as usize] > self.tau_star {
                if let Some(p) = hierarchy.parent(leaf) {
                    scopes.entry(p).or_default().push(leaf);
                }
            }
        }
        for (scope_id, targets) in scopes {
            let scope = Scope::from_hierarchy(hierarchy, scope_id)?;
            if scope.len() < 2 {
                continue;
            }
            for target in targets {
                let j = hierarchy.rank_in_parent(target) as usize;
                let r_b_max = backward_threshold(graph, &scope, j, params);
                let state = gbp(graph, &scope, j, params.alpha, r_b_max)?;
                let estimates = state
                    .estimates
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| (scope.child(i), e))
                    .collect();
                self.gbp_cache.insert(
                    target,
                    CachedColumn {
                        scope: scope_id,
                        r_b_max,
                        estimates,
                    },
                );
            }
        }
        Ok(self.gbp_cache.len())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 16 + self.tau.len() * 8);
        out.extend_from_slice(DPR_MAGIC);
        out.extend_from_slice(&(self.tau.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.tau_star.to_le_bytes());
        for t in &self.tau {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    /// Parses the `PVDPR1` file; the GBP cache is loaded separately.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |msg: &str| Error::Format {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        };
        if bytes.len() < 22 || &bytes[..6] != DPR_MAGIC {
            return Err(fail("bad magic"));
        }
        let n = le_u64(bytes, 6).unwrap() as usize;
        let tau_star = le_f64(bytes, 14).unwrap();
        if bytes.len() != 22 + n * 8 {
            return Err(fail("length does not match node count"));
        }
        let tau = (0..n).map(|i| le_f64(bytes, 22 + i * 8).unwrap()).collect();
        Ok(Self {
            tau,
            tau_star,
            gbp_cache: BTreeMap::new(),
        })
    }

    /// Writes `dpr.bin` and one `gbp/<target>.bin` file per cached column.
    pub fn save(&self, dpr_path: &Path, cache_dir: &Path) -> Result<()> {
        fs::write(dpr_path, self.to_bytes()).map_err(|e| Error::io(dpr_path, e))?;
        if cache_dir.exists() {
            fs::remove_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
        }
        fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
        for (&target, col) in &self.gbp_cache {
            let path = cache_dir.join(format!("{target}.bin"));
            fs::write(&path, encode_column(target, col)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dpr_path: &Path, cache_dir: &Path) -> Result<Self> {
        let bytes = fs::read(dpr_path).map_err(|e| Error::io(dpr_path, e))?;
        let mut index = Self::from_bytes(&bytes, dpr_path)?;
        if cache_dir.is_dir() {
            let mut files: Vec<_> = fs::read_dir(cache_dir)
                .map_err(|e| Error::io(cache_dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "bin"))
                .collect();
            files.sort();
            for path in files {
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let (target, col) = decode_column(&bytes, &path)?;
                index.gbp_cache.insert(target, col);
            }
        }
        Ok(index)
    }
}

fn encode_column(target: u32, col: &CachedColumn) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 32 + col.estimates.len() * 16);
    out.extend_from_slice(GBP_MAGIC);
    out.extend_from_slice(&(target as u64).to_le_bytes());
    out.extend_from_slice(&(col.scope as u64).to_le_bytes());
    out.extend_from_slice(&col.r_b_max.to_le_bytes());
    out.extend_from_slice(&(col.estimates.len() as u64).to_le_bytes());
    for &(leaf, est) in &col.estimates {
        out.extend_from_slice(&(leaf as u64).to_le_bytes());
        out.extend_from_slice(&est.to_le_bytes());
    }
    out
}

fn decode_column(bytes: &[u8], path: &Path) -> Result<(u32, CachedColumn)> {
    let fail = || Error::Format {
        path: path.to_path_buf(),
        msg: "malformed GBP cache entry".into(),
    };
    if bytes.len() < 38 || &bytes[..6] != GBP_MAGIC {
        return Err(fail());
    }
    let target = le_u64(bytes, 6).ok_or_else(fail)? as u32;
    let scope = le_u64(bytes, 14).ok_or_else(fail)? as u32;
    let r_b_max = le_f64(bytes, 22).ok_or_else(fail)?;
    let count = le_u64(bytes, 30).ok_or_else(fail)? as usize;
    if bytes.len() != 38 + count * 16 {
        return Err(fail());
    }
    let estimates = (0..count)
        .map(|i| {
            let at = 38 + i * 16;
            (le_u64(bytes, at).unwrap() as u32, le_f64(bytes, at + 8).unwrap())
        })
        .collect();
    Ok((
        target,
        CachedColumn {
            scope,
            r_b_max,
            estimates,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_self_loop() {
        let g = DirectedGraph::from_edges(1, [(0, 0)]).unwrap();
        let dpr = compute_dpr(&g, &PprParams::defaults(2, 1));
        assert!((dpr.tau[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_cycle_is_symmetric() {
        let g = DirectedGraph::from_edges(2, [(0, 1), (1, 0)]).unwrap();
        let dpr = compute_dpr(&g, &PprParams::defaults(2, 2));
        assert!((dpr.tau[0] - 0.5).abs() < 1e-9);
        assert!((dpr.tau[1] - 0.5).abs() < 1e-9);
        assert!((dpr.tau_star - 0.5).abs() < 1e-15);
    }

    #[test]
    fn binary_round_trip() {
        let g = DirectedGraph::from_edges(3, [(0, 1), (1, 2), (2, 0), (0, 2)]).unwrap();
        let mut dpr = compute_dpr(&g, &PprParams::defaults(2, 3));
        dpr.gbp_cache.insert(
            1,
            CachedColumn {
                scope: 4,
                r_b_max: 0.01,
                estimates: vec![(0, 0.25), (1, 0.5)],
            },
        );
        let dir = tempfile::tempdir().unwrap();
        let dpr_path = dir.path().join("dpr.bin");
        let cache = dir.path().join("gbp");
        dpr.save(&dpr_path, &cache).unwrap();
        let bytes = fs::read(&dpr_path).unwrap();
        assert_eq!(&bytes[..6], b"PVDPR1");
        assert_eq!(bytes.len(), 6 + 8 + 8 + 3 * 8);
        assert_eq!(DprIndex::load(&dpr_path, &cache).unwrap(), dpr);
    }
}
