use std::collections::BTreeMap;
use std::fmt::Write;
use std::time::Instant;

use pprviz_core::pipeline::{VisualizeOptions, Workspace};
use pprviz_core::ppr::Engine;
use pprviz_core::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CSV_HEADER: &str = "level,engine,paths,mean_ms,median_ms,pdist_ms,layout_ms";

/// Seeded random zoom-in paths: each starts at the root and steps into a
/// random non-leaf child until only leaves remain below.
pub fn zoom_paths(ws: &Workspace, count: usize, seed: u64) -> Vec<Vec<u32>> {
    let h = ws.hierarchy();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut path = vec![h.root()];
            let mut at = h.root();
            loop {
                let inner: Vec<u32> = h
                    .children(at)
                    .iter()
                    .copied()
                    .filter(|&c| !h.is_leaf(c))
                    .collect();
                match inner.choose(&mut rng) {
                    Some(&next) => {
                        path.push(next);
                        at = next;
                    }
                    None => break,
                }
            }
            path
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub level: usize,
    pub engine: Engine,
    pub paths: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub pdist_ms: f64,
    pub layout_ms: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}

/// Visualizes every supernode on every path with each engine and reports
/// per-level latency. All engines walk the same paths.
pub fn run_bench(ws: &Workspace, engines: &[Engine], paths: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if paths == 0 {
        return Err(Error::InvalidParameter("need at least one zoom path".into()));
    }
    if engines.is_empty() {
        return Err(Error::InvalidParameter("need at least one engine".into()));
    }
    let walks = zoom_paths(ws, paths, seed);
    let mut rows = Vec::new();
    for &engine in engines {
        // level -> (total, pdist, layout) samples
        let mut samples: BTreeMap<usize, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
        let opts = VisualizeOptions {
            engine,
            timing: true,
            ..VisualizeOptions::default()
        };
        for path in &walks {
            for &id in path {
                let start = Instant::now();
                let r = ws.visualize(id, &opts)?;
                let total = start.elapsed().as_secs_f64() * 1e3;
                let t = r.timing.expect("timing requested");
                let entry = samples.entry(r.level).or_default();
                entry.0.push(total);
                entry.1.push(t.pdist_ms);
                entry.2.push(t.layout_ms);
            }
        }
        for (level, (total, pdist, layout)) in samples.into_iter().rev() {
            rows.push(BenchRow {
                level,
                engine,
                paths,
                mean_ms: mean(&total),
                median_ms: median(&total),
                pdist_ms: mean(&pdist),
                layout_ms: mean(&layout),
            });
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:.4},{:.4},{:.4},{:.4}",
            r.level, r.engine, r.paths, r.mean_ms, r.median_ms, r.pdist_ms, r.layout_ms
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
