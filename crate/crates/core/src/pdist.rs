//! PPR-based distances between the children of a scope.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest `n` for which `[2, 2 ln n]` is a usable interval.
pub const MIN_CLAMP_CONTEXT: usize = 8;

/// Graph size used by the upper clamp; small graphs are lifted to
/// [`MIN_CLAMP_CONTEXT`].
pub fn clamp_context(n: usize) -> usize {
    n.max(MIN_CLAMP_CONTEXT)
}

/// `min(max(1 - ln z, 2), 2 ln n)` where `z` is the symmetrized DPPR.
pub fn dppr_to_pdist(z: f64, n: usize) -> Result<f64> {
    if n < MIN_CLAMP_CONTEXT {
        return Err(Error::Domain(format!(
            "graph size {n} is below {MIN_CLAMP_CONTEXT}; the distance interval is empty"
        )));
    }
    if !(z >= 0.0) || z.is_infinite() {
        return Err(Error::Domain(format!("DPPR sum must be finite and >= 0, got {z}")));
    }
    let upper = 2.0 * (n as f64).ln();
    if z == 0.0 {
        return Ok(upper);
    }
    Ok((1.0 - z.ln()).max(2.0).min(upper))
}

/// Symmetric distance matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PDistMatrix {
    size: usize,
    values: Vec<f64>,
    n_context: usize,
}

impl PDistMatrix {
    /// Wraps a precomputed matrix after checking shape, symmetry and the
    /// zero diagonal.
    pub fn from_rows(rows: &[Vec<f64>], n_context: usize) -> Result<Self> {
        let size = rows.len();
        let mut values = Vec::with_capacity(size * size);
        for row in rows {
            if row.len() != size {
                return Err(Error::Shape(format!(
                    "expected {size} columns, got a row of {}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        let m = Self {
            size,
            values,
            n_context,
        };
        for i in 0..size {
            if m.get(i, i) != 0.0 {
                return Err(Error::Domain(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..i {
                let (a, b) = (m.get(i, j), m.get(j, i));
                if a != b || !(a > 0.0) || !a.is_finite() {
                    return Err(Error::Domain(format!(
                        "entries ({i},{j}) must be equal, positive and finite"
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_context(&self) -> usize {
        self.n_context
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.size.max(1)).map(<[f64]>::to_vec).take(self.size).collect()
    }

    /// Off-diagonal pairs `(i, j, value)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.size).flat_map(move |i| (i + 1..self.size).map(move |j| (i, j, self.get(i, j))))
    }

    /// Row-major CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.size {
            for j in 0..self.size {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{:.16e}", self.get(i, j)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// `Δ[i,j] = dppr_to_pdist(dppr[i][j] + dppr[j][i], n)`, diagonal zero.
pub fn build_pdist_matrix(dppr: &[Vec<f64>], n: usize) -> Result<PDistMatrix> {
    let size = dppr.len();
    if let Some(row) = dppr.iter().find(|r| r.len() != size) {
        return Err(Error::Shape(format!(
            "DPPR matrix must be square: {size} rows but a row of {}",
            row.len()
        )));
    }
    let n_context = clamp_context(n);
    let mut values = vec![0.0; size * size];
    for i in 0..size {
        for j in i + 1..size {
            let d = dppr_to_pdist(dppr[i][j] + dppr[j][i], n_context)?;
            values[i * size + j] = d;
            values[j * size + i] = d;
        }
    }
    Ok(PDistMatrix {
        size,
        values,
        n_context,
    })
}

/// DPPR accuracy `(epsilon, delta)` that yields distance accuracy
/// `(theta, sigma)`: `delta = e^(1-sigma)/2`, `epsilon = 1 - e^(-2 theta)`.
pub fn lemma1_params(theta: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0 && theta.is_finite() && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "theta must be positive and sigma finite, got theta={theta}, sigma={sigma}"
        )));
    }
    Ok((1.0 - (-2.0 * theta).exp(), (1.0 - sigma).exp() / 2.0))
}

/// The distance analogue of the (eps, delta) check: error within
/// `theta * Δ` below `sigma`, within `theta * sigma` otherwise.
pub fn is_theta_sigma_approx(estimate: f64, exact: f64, theta: f64, sigma: f64) -> bool {
    let err = (estimate - exact).abs();
    if exact < sigma {
        err <= theta * exact
    } else {
        err <= theta * sigma
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps() {
        let upper = 2.0 * 10f64.ln();
        assert!((dppr_to_pdist((-1.0f64).exp(), 10).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(dppr_to_pdist(1.0, 10).unwrap(), 2.0);
        assert!((dppr_to_pdist((-5.0f64).exp(), 10).unwrap() - upper).abs() < 1e-12);
        assert!((upper - 4.605_170_185_988_091).abs() < 1e-12);
        assert_eq!(dppr_to_pdist(0.0, 10).unwrap(), upper);
        // interior value
        let z = (-2.0f64).exp();
        assert!((dppr_to_pdist(z, 100).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(dppr_to_pdist(-0.1, 10), Err(Error::Domain(_))));
        assert!(matches!(dppr_to_pdist(f64::NAN, 10), Err(Error::Domain(_))));
        assert!(matches!(dppr_to_pdist(0.5, 7), Err(Error::Domain(_))));
    }

    #[test]
    fn matrix_examples() {
        let d = build_pdist_matrix(&[vec![0.0, 0.5], vec![0.6, 0.0]], 100).unwrap();
        assert_eq!(d.get(0, 1), 2.0);
        assert_eq!(d.get(1, 0), 2.0);
        assert_eq!(d.get(0, 0), 0.0);

        let z: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 0.3 } else { 0.0 }).collect())
            .collect();
        let d = build_pdist_matrix(&z, 100).unwrap();
        for (_, _, v) in d.pairs() {
            assert!((v - 2.0 * 100f64.ln()).abs() < 1e-12);
        }

        let asym = vec![vec![0.0, 0.01, 0.0], vec![0.1, 0.0, 0.02], vec![0.0, 0.0, 0.0]];
        let d = build_pdist_matrix(&asym, 50).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
        assert!(matches!(
            build_pdist_matrix(&[vec![0.0, 1.0]], 50),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn small_graphs_use_lifted_context() {
        let d = build_pdist_matrix(&[vec![0.0, 1e-9], vec![0.0, 0.0]], 2).unwrap();
        assert_eq!(d.n_context(), 8);
        assert!((d.get(0, 1) - 2.0 * 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lemma1_examples() {
        let (e, d) = lemma1_params(0.5, 1.0).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        assert!((e - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let (e, d) = lemma1_params(1.0, 3.0).unwrap();
        assert!((d - 0.067_667_641_618_306_35).abs() < 1e-15);
        assert!((e - 0.864_664_716_763_387_3).abs() < 1e-15);
        let (e, _) = lemma1_params(1e-12, 2.0).unwrap();
        assert!(e < 1e-11);
        assert!(lemma1_params(0.0, 2.0).is_err());
    }

    #[test]
    fn csv_round_trips_values() {
        let d = build_pdist_matrix(&[vec![0.0, 0.05], vec![0.07, 0.0]], 20).unwrap();
        let csv = d.to_csv();
        let parsed: Vec<Vec<f64>> = csv
            .lines()
            .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
            .collect();
        assert_eq!(parsed, d.rows());
    }
}
