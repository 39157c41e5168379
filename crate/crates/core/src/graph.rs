//! Directed graph storage: CSR adjacency in both directions.
//!
//! Graphs are immutable once built. Every node has out-degree at least one:
//! nodes that would be dangling get a self-loop at construction time so the
//! random-walk transition matrix stays row-stochastic.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Edge direction for adjacency queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
}

const GRAPH_MAGIC: &[u8; 5] = b"PVGZ1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    node_count: usize,
    out_offsets: Vec<usize>,
    out_targets: Vec<u32>,
    in_offsets: Vec<usize>,
    in_targets: Vec<u32>,
}

/// A graph together with the table mapping dense IDs back to file IDs.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: DirectedGraph,
    /// `remap[dense] = original`.
    pub remap: Vec<u64>,
}

fn build_csr(n: usize, pairs: &[(u32, u32)]) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = vec![0usize; n + 1];
    for &(u, _) in pairs {
        offsets[u as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut cursor = offsets.clone();
    let mut targets = vec![0u32; pairs.len()];
    for &(u, v) in pairs {
        targets[cursor[u as usize]] = v;
        cursor[u as usize] += 1;
    }
    (offsets, targets)
}

impl DirectedGraph {
    /// Builds a graph over nodes `0..n`. Duplicate edges are collapsed and
    /// every node left without an out-edge receives a self-loop.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidParameter(format!("too many nodes: {n}")));
        }
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for (u, v) in edges {
            for id in [u, v] {
                if id as usize >= n {
                    return Err(Error::NodeOutOfRange { id: id as usize, n });
                }
            }
            pairs.push((u, v));
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut has_out = vec![false; n];
        for &(u, _) in &pairs {
            has_out[u as usize] = true;
        }
        let dangling: Vec<(u32, u32)> = (0..n as u32)
            .filter(|&v| !has_out[v as usize])
            .map(|v| (v, v))
            .collect();
        if !dangling.is_empty() {
            pairs.extend(dangling);
            pairs.sort_unstable();
        }

        let (out_offsets, out_targets) = build_csr(n, &pairs);
        let mut reversed: Vec<(u32, u32)> = pairs.iter().map(|&(u, v)| (v, u)).collect();
        reversed.sort_unstable();
        let (in_offsets, in_targets) = build_csr(n, &reversed);

        Ok(Self {
            node_count: n,
            out_offsets,
            out_targets,
            in_offsets,
            in_targets,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Number of directed edges, i.e. the sum of out-degrees.
    pub fn edge_count(&self) -> usize {
        self.out_targets.len()
    }

    #[inline]
    pub fn out_degree(&self, v: u32) -> usize {
        let v = v as usize;
        self.out_offsets[v + 1] - self.out_offsets[v]
    }

    #[inline]
    pub fn out_neighbors(&self, v: u32) -> &[u32] {
        let v = v as usize;
        &self.out_targets[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    #[inline]
    pub fn in_neighbors(&self, v: u32) -> &[u32] {
        let v = v as usize;
        &self.in_targets[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    /// Checked adjacency lookup.
    pub fn neighbors(&self, v: usize, direction: Direction) -> Result<&[u32]> {
        if v >= self.node_count {
            return Err(Error::NodeOutOfRange {
                id: v,
                n: self.node_count,
            });
        }
        Ok(match direction {
            Direction::Out => self.out_neighbors(v as u32),
            Direction::In => self.in_neighbors(v as u32),
        })
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.node_count as u32)
            .flat_map(move |u| self.out_neighbors(u).iter().map(move |&v| (u, v)))
    }

    /// Undirected view: each unordered pair `{u, v}` once with `u <= v`.
    pub fn undirected_edges(&self) -> Vec<(u32, u32)> {
        let mut pairs: Vec<(u32, u32)> = self
            .edges()
            .map(|(u, v)| if u <= v { (u, v) } else { (v, u) })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Edge-list text using dense IDs, one `src dst` per line.
    pub fn to_edge_list_text(&self) -> String {
        let mut out = String::with_capacity(self.edge_count() * 8);
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    /// Serializes the binary cache: magic, n, m, then CSR offsets and
    /// targets for out- and in-adjacency. All integers little-endian u64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(GRAPH_MAGIC)?;
        w.write_all(&(self.node_count as u64).to_le_bytes())?;
        w.write_all(&(self.edge_count() as u64).to_le_bytes())?;
        for (offsets, targets) in [
            (&self.out_offsets, &self.out_targets),
            (&self.in_offsets, &self.in_targets),
        ] {
            for &o in offsets {
                w.write_all(&(o as u64).to_le_bytes())?;
            }
            for &t in targets {
                w.write_all(&(t as u64).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |msg: &str| Error::Format {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        };
        if bytes.len() < 21 || &bytes[..5] != GRAPH_MAGIC {
            return Err(fail("bad magic"));
        }
        let mut words = bytes[5..].chunks_exact(8).map(|c| {
            let mut b = [0u8; 8];
            b.copy_from_slice(c);
            u64::from_le_bytes(b)
        });
        let mut next = || words.next().ok_or_else(|| fail("truncated"));
        let n = next()? as usize;
        let m = next()? as usize;
        let read_csr = |next: &mut dyn FnMut() -> Result<u64>| -> Result<(Vec<usize>, Vec<u32>)> {
            let offsets = (0..=n).map(|_| next().map(|x| x as usize)).collect::<Result<Vec<_>>>()?;
            let targets = (0..m).map(|_| next().map(|x| x as u32)).collect::<Result<Vec<_>>>()?;
            Ok((offsets, targets))
        };
        let (out_offsets, out_targets) = read_csr(&mut next)?;
        let (in_offsets, in_targets) = read_csr(&mut next)?;
        let g = Self {
            node_count: n,
            out_offsets,
            out_targets,
            in_offsets,
            in_targets,
        };
        g.validate().map_err(|e| fail(&e.to_string()))?;
        Ok(g)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::read_binary(&bytes, path)
    }

    /// Checks the structural invariants of the adjacency arrays.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_count;
        let bad = |msg: String| Err(Error::Invariant(msg));
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if self.out_offsets.len() != n + 1 || self.in_offsets.len() != n + 1 {
            return bad("offset array length".into());
        }
        if self.out_targets.len() != self.in_targets.len() {
            return bad("in/out edge counts differ".into());
        }
        for v in 0..n as u32 {
            if self.out_degree(v) == 0 {
                return bad(format!("node {v} has no out-edge"));
            }
            for &w in self.out_neighbors(v) {
                if w as usize >= n || self.in_neighbors(w).binary_search(&v).is_err() {
                    return bad(format!("edge ({v},{w}) missing from in-adjacency"));
                }
            }
        }
        Ok(())
    }
}

/// Parses edge-list text. IDs are remapped to `0..n` in ascending order of
/// their original value.
pub fn parse_edge_list(text: &str, symmetrize: bool, path: &Path) -> Result<LoadedGraph> {
    let mut raw: Vec<(u64, u64)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let mut id = |what: &str| -> Result<u64> {
            let tok = fields
                .next()
                .ok_or_else(|| parse_err(format!("missing {what} id")))?;
            tok.parse::<u64>()
                .map_err(|_| parse_err(format!("invalid {what} id {tok:?}")))
        };
        let src = id("source")?;
        let dst = id("target")?;
        if let Some(extra) = fields.next() {
            return Err(parse_err(format!("unexpected token {extra:?}")));
        }
        raw.push((src, dst));
    }
    if raw.is_empty() {
        return Err(Error::EmptyGraph);
    }

    let mut ids: BTreeMap<u64, u32> = BTreeMap::new();
    for &(u, v) in &raw {
        ids.insert(u, 0);
        ids.insert(v, 0);
    }
    let mut remap = Vec::with_capacity(ids.len());
    for (dense, (orig, slot)) in ids.iter_mut().enumerate() {
        *slot = dense as u32;
        remap.push(*orig);
    }
    let mut edges = Vec::with_capacity(raw.len() * if symmetrize { 2 } else { 1 });
    for (u, v) in raw {
        let (a, b) = (ids[&u], ids[&v]);
        edges.push((a, b));
        if symmetrize {
            edges.push((b, a));
        }
    }
    let graph = DirectedGraph::from_edges(remap.len(), edges)?;
    Ok(LoadedGraph { graph, remap })
}

/// Reads an edge-list file. See [`parse_edge_list`].
pub fn load_edge_list(path: &Path, symmetrize: bool) -> Result<LoadedGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, symmetrize, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, sym: bool) -> Result<LoadedGraph> {
        parse_edge_list(text, sym, Path::new("<test>"))
    }

    #[test]
    fn two_node_cycle() {
        let g = parse("0 1\n1 0", false).unwrap().graph;
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.out_degree(0), 1);
        assert_eq!(g.out_degree(1), 1);
        assert_eq!(g.neighbors(0, Direction::Out).unwrap(), &[1]);
        assert_eq!(g.neighbors(1, Direction::In).unwrap(), &[0]);
    }

    #[test]
    fn dangling_node_gets_self_loop() {
        let g = parse("0 1", false).unwrap().graph;
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.out_degree(1), 1);
        assert_eq!(g.neighbors(1, Direction::Out).unwrap(), &[1]);
    }

    #[test]
    fn duplicates_and_comments() {
        let g = parse("0 1\n0 1\n# comment", false).unwrap().graph;
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.out_degree(0), 1);
    }

    #[test]
    fn crlf_and_sparse_ids_are_remapped() {
        let loaded = parse("10 30\r\n30 20\r\n", false).unwrap();
        assert_eq!(loaded.remap, vec![10, 20, 30]);
        let g = loaded.graph;
        assert_eq!(g.out_neighbors(0), &[2]);
        assert_eq!(g.out_neighbors(2), &[1]);
        assert_eq!(g.out_neighbors(1), &[1]);
    }

    #[test]
    fn symmetrize_mirrors_edges() {
        let g = parse("0 1\n1 2", true).unwrap().graph;
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.out_neighbors(1), &[0, 2]);
        assert_eq!(g.in_neighbors(1), &[0, 2]);
    }

    #[test]
    fn self_loops_preserved() {
        let g = parse("0 0\n0 1\n1 0", false).unwrap().graph;
        assert_eq!(g.out_neighbors(0), &[0, 1]);
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn parse_errors_report_line() {
        let err = parse("0 1\n1 x\n", false).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("0\n", false), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("-1 2\n", false), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_input() {
        let err = parse("# nothing\n\n", false).unwrap_err();
        assert_eq!(err.to_string(), "empty graph");
    }

    #[test]
    fn out_of_range_neighbor_query() {
        let g = parse("0 1\n1 0", false).unwrap().graph;
        assert!(matches!(
            g.neighbors(5, Direction::Out),
            Err(Error::NodeOutOfRange { id: 5, n: 2 })
        ));
    }

    #[test]
    fn binary_cache_round_trip() {
        let g = parse("0 1\n1 2\n2 0\n2 3", false).unwrap().graph;
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"PVGZ1");
        let back = DirectedGraph::read_binary(&buf, Path::new("<mem>")).unwrap();
        assert_eq!(back, g);
        assert!(DirectedGraph::read_binary(&buf[..30], Path::new("<mem>")).is_err());
    }

    #[test]
    fn load_missing_file_names_path() {
        let err = load_edge_list(Path::new("/definitely/not/here.el"), false).unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.el"));
    }
}
