//! Stress majorization of a distance matrix into 2-D positions.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdist::PDistMatrix;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_REL_TOL: f64 = 1e-7;
const COINCIDENT_NUDGE: f64 = 1e-9;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            rel_tol: DEFAULT_REL_TOL,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub coords: Vec<Point>,
    pub stress: f64,
    pub iterations: usize,
    /// Loss before the first iteration followed by the loss after each one.
    pub loss_history: Vec<f64>,
}

#[inline]
fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn check_shape(delta: &PDistMatrix, coords: &[Point]) -> Result<()> {
    if delta.size() != coords.len() {
        return Err(Error::Shape(format!(
            "{} points for a {}x{} distance matrix",
            coords.len(),
            delta.size(),
            delta.size()
        )));
    }
    Ok(())
}

/// `sum_{i<j} (1 - |X[i] - X[j]| / Δ[i,j])^2`.
pub fn loss(delta: &PDistMatrix, coords: &[Point]) -> Result<f64> {
    check_shape(delta, coords)?;
    Ok(delta
        .pairs()
        .map(|(i, j, d)| {
            let t = 1.0 - dist(coords[i], coords[j]) / d;
            t * t
        })
        .sum())
}

/// Weighted Laplacian with off-diagonal `-1/Δ²`.
pub fn weighted_laplacian(delta: &PDistMatrix) -> DMatrix<f64> {
    let c = delta.size();
    let mut l = DMatrix::zeros(c, c);
    for (i, j, d) in delta.pairs() {
        let w = -1.0 / (d * d);
        l[(i, j)] = w;
        l[(j, i)] = w;
        l[(i, i)] -= w;
        l[(j, j)] -= w;
    }
    l
}

/// `L^Y` with off-diagonal `-1/(Δ |Y[i]-Y[j]|)`, zero for coincident pairs.
pub fn stress_laplacian(delta: &PDistMatrix, y: &[Point]) -> DMatrix<f64> {
    let c = delta.size();
    let mut l = DMatrix::zeros(c, c);
    for (i, j, d) in delta.pairs() {
        let len = dist(y[i], y[j]);
        if len == 0.0 {
            continue;
        }
        let w = -1.0 / (d * len);
        l[(i, j)] = w;
        l[(j, i)] = w;
        l[(i, i)] -= w;
        l[(j, j)] -= w;
    }
    l
}

fn to_matrix(points: &[Point]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 2, |i, k| points[i][k])
}

struct Solver {
    cholesky: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl Solver {
    fn new(delta: &PDistMatrix) -> Result<Self> {
        let c = delta.size();
        if c < 2 {
            return Ok(Self { cholesky: None });
        }
        let lw = weighted_laplacian(delta);
        let reduced = lw.view((1, 1), (c - 1, c - 1)).into_owned();
        let cholesky = reduced
            .cholesky()
            .ok_or_else(|| Error::Invariant("reduced weighted Laplacian is not SPD".into()))?;
        Ok(Self {
            cholesky: Some(cholesky),
        })
    }

    /// Solves `L^w X = L^Y Y` with `X[0]` pinned to the origin.
    fn step(&self, delta: &PDistMatrix, y: &[Point]) -> Vec<Point> {
        let c = y.len();
        let Some(ch) = &self.cholesky else {
            return vec![[0.0, 0.0]; c];
        };
        let rhs = stress_laplacian(delta, y) * to_matrix(y);
        let mut out = vec![[0.0, 0.0]; c];
        for k in 0..2 {
            let b = DVector::from_fn(c - 1, |i, _| rhs[(i + 1, k)]);
            let x = ch.solve(&b);
            for i in 1..c {
                out[i][k] = x[i - 1];
            }
        }
        out
    }
}

/// One majorization update from `y`.
pub fn stress_step(delta: &PDistMatrix, y: &[Point]) -> Result<Vec<Point>> {
    check_shape(delta, y)?;
    Ok(Solver::new(delta)?.step(delta, y))
}

/// Seeded uniform start in a square of side `2 ln(n_context)`.
pub fn initial_positions(delta: &PDistMatrix, seed: u64) -> Vec<Point> {
    let side = 2.0 * (delta.n_context().max(2) as f64).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Point> = (0..delta.size())
        .map(|_| [rng.gen::<f64>() * side, rng.gen::<f64>() * side])
        .collect();
    for i in 0..pts.len() {
        for j in 0..i {
            if pts[i] == pts[j] {
                pts[i][0] += COINCIDENT_NUDGE * (i as f64);
            }
        }
    }
    pts
}

pub fn stress_majorization(delta: &PDistMatrix, options: &LayoutOptions) -> Result<Layout> {
    let c = delta.size();
    if c == 0 {
        return Err(Error::Usage("cannot lay out zero points".into()));
    }
    if c == 1 {
        return Ok(Layout {
            coords: vec![[0.0, 0.0]],
            stress: 0.0,
            iterations: 0,
            loss_history: vec![0.0],
        });
    }
    let solver = Solver::new(delta)?;
    let mut y = initial_positions(delta, options.seed);
    let mut current = loss(delta, &y)?;
    let mut history = vec![current];
    let mut iterations = 0;
    while iterations < options.max_iters {
        let x = solver.step(delta, &y);
        let next = loss(delta, &x)?;
        iterations += 1;
        history.push(next);
        let improvement = current - next;
        y = x;
        let done = next == 0.0 || improvement / current < options.rel_tol;
        current = next;
        if done {
            break;
        }
    }
    if y.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Invariant("layout produced non-finite coordinates".into()));
    }
    Ok(Layout {
        coords: y,
        stress: current,
        iterations,
        loss_history: history,
    })
}

/// Centroid to the origin, then scale so the largest absolute coordinate is 1.
pub fn normalize_layout(coords: &[Point]) -> Vec<Point> {
    if coords.is_empty() {
        return Vec::new();
    }
    let c = coords.len() as f64;
    let cx = coords.iter().map(|p| p[0]).sum::<f64>() / c;
    let cy = coords.iter().map(|p| p[1]).sum::<f64>() / c;
    let centered: Vec<Point> = coords.iter().map(|p| [p[0] - cx, p[1] - cy]).collect();
    let extent = centered
        .iter()
        .flat_map(|p| [p[0].abs(), p[1].abs()])
        .fold(0.0, f64::max);
    if extent == 0.0 {
        return centered.into_iter().map(|_| [0.0, 0.0]).collect();
    }
    centered
        .into_iter()
        .map(|p| [p[0] / extent, p[1] / extent])
        .collect()
}

/// `{"ids": [...], "xy": [[x, y], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub ids: Vec<u64>,
    pub xy: Vec<Point>,
}

pub struct SvgNode {
    pub id: u64,
    pub xy: Point,
    pub leaf_count: usize,
}

/// Circles sized by `sqrt(leaf_count)` and straight edges; arrowheads only
/// on edges without a reverse partner. Coordinates are expected in [-1, 1].
pub fn render_svg(nodes: &[SvgNode], edges: &[(usize, usize)]) -> String {
    const SIZE: f64 = 800.0;
    const MARGIN: f64 = 60.0;
    let span = (SIZE - 2.0 * MARGIN) / 2.0;
    let px = |p: Point| (MARGIN + (p[0] + 1.0) * span, MARGIN + (1.0 - p[1]) * span);
    let max_leaves = nodes.iter().map(|n| n.leaf_count).max().unwrap_or(1).max(1) as f64;
    let radius = |n: &SvgNode| 4.0 + 20.0 * (n.leaf_count as f64 / max_leaves).sqrt();

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    s.push_str(concat!(
        r#"<defs><marker id="arrow" viewBox="0 0 10 10" refX="10" refY="5" "#,
        r#"markerWidth="6" markerHeight="6" orient="auto-start-reverse">"#,
        r##"<path d="M 0 0 L 10 5 L 0 10 z" fill="#555"/></marker></defs>"##,
        "\n"
    ));
    let has = |a: usize, b: usize| edges.contains(&(a, b));
    for &(a, b) in edges {
        if a == b || (has(b, a) && b < a) {
            continue;
        }
        let (x1, y1) = px(nodes[a].xy);
        let (x2, y2) = px(nodes[b].xy);
        let (dx, dy) = (x2 - x1, y2 - y1);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        // stop the line at the target circle's rim
        let cut = radius(&nodes[b]) / len;
        let (ex, ey) = (x2 - dx * cut, y2 - dy * cut);
        let marker = if has(b, a) { "" } else { r#" marker-end="url(#arrow)""# };
        writeln!(
            s,
            r##"<line x1="{x1:.3}" y1="{y1:.3}" x2="{ex:.3}" y2="{ey:.3}" stroke="#555" stroke-width="1"{marker}/>"##
        )
        .unwrap();
    }
    for n in nodes {
        let (x, y) = px(n.xy);
        writeln!(
            s,
            r##"<circle cx="{x:.3}" cy="{y:.3}" r="{:.3}" fill="#4a7bd0" fill-opacity="0.8"><title>{} ({} leaves)</title></circle>"##,
            radius(n),
            n.id,
            n.leaf_count
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
