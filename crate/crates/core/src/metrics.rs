//! Layout quality metrics and the two closed-form bounds on them.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::layout::Point;
use crate::pdist::PDistMatrix;

/// Largest restart probability for which the ULCV bound applies:
/// `1/2 - sqrt(1/4 - 1/(2e))`.
pub fn ulcv_alpha_limit() -> f64 {
    0.5 - (0.25 - 0.5 / std::f64::consts::E).sqrt()
}

/// `sum_{i<j} 1 / |X[i] - X[j]|^2`, infinite when two points coincide.
pub fn node_distribution(coords: &[Point]) -> Result<f64> {
    if coords.len() < 2 {
        return Err(Error::Usage(format!(
            "node distribution needs at least 2 points, got {}",
            coords.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..coords.len() {
        for j in 0..i {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let sq = dx * dx + dy * dy;
            if sq == 0.0 {
                return Ok(f64::INFINITY);
            }
            total += 1.0 / sq;
        }
    }
    Ok(total)
}

/// Population standard deviation over mean of the given lengths; `None`
/// without lengths or with a zero mean.
pub fn coefficient_of_variation(lengths: &[f64]) -> Option<f64> {
    if lengths.is_empty() {
        return None;
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return None;
    }
    let var = lengths.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    Some(var.sqrt() / mean)
}

/// ULCV of the drawn edges; self-loops are skipped.
pub fn ulcv(coords: &[Point], edges: &[(usize, usize)]) -> Option<f64> {
    let lengths: Vec<f64> = edges
        .iter()
        .filter(|(a, b)| a != b)
        .map(|&(a, b)| (coords[a][0] - coords[b][0]).hypot(coords[a][1] - coords[b][1]))
        .collect();
    coefficient_of_variation(&lengths)
}

/// `0.215 e m + 0.0175 n^2`.
pub fn nd_bound(n: usize, m: usize) -> f64 {
    0.215 * std::f64::consts::E * m as f64 + 0.0175 * (n * n) as f64
}

/// `(ln(1/(2 alpha (1 - alpha))) - 1) / 4`, if `alpha` is small enough.
pub fn ulcv_bound(alpha: f64) -> Option<f64> {
    (alpha > 0.0 && alpha <= ulcv_alpha_limit())
        .then(|| ((1.0 / (2.0 * alpha * (1.0 - alpha))).ln() - 1.0) / 4.0)
}

fn ser_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_extended<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Raw::Text(t) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {t}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WithinBounds {
    pub nd: bool,
    /// `None` when the ULCV bound does not apply or ULCV is undefined.
    pub ulcv: Option<bool>,
}

/// ND and ULCV of a distance matrix taken as exact point distances, next to
/// their bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub nd: f64,
    pub ulcv: Option<f64>,
    pub nd_bound: f64,
    pub ulcv_bound: Option<f64>,
    pub within_bounds: WithinBounds,
}

/// ND over Δ entries and ULCV over Δ at the given edges.
pub fn check_theorem_bounds(
    delta: &PDistMatrix,
    edges: &[(usize, usize)],
    n: usize,
    m: usize,
    alpha: f64,
) -> Result<MetricReport> {
    if delta.size() < 2 {
        return Err(Error::Usage("bounds need at least 2 points".into()));
    }
    let nd: f64 = delta.pairs().map(|(_, _, d)| 1.0 / (d * d)).sum();
    let lengths: Vec<f64> = edges
        .iter()
        .filter(|(a, b)| a != b)
        .map(|&(a, b)| delta.get(a, b))
        .collect();
    let ulcv = coefficient_of_variation(&lengths);
    let nd_bound = nd_bound(n, m);
    let ulcv_bound = ulcv_bound(alpha);
    let within_ulcv = match (ulcv, ulcv_bound) {
        (Some(u), Some(b)) => Some(u <= b),
        _ => None,
    };
    Ok(MetricReport {
        nd,
        ulcv,
        nd_bound,
        ulcv_bound,
        within_bounds: WithinBounds {
            nd: nd <= nd_bound,
            ulcv: within_ulcv,
        },
    })
}

/// ND and ULCV of a drawn (normalized) layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutMetrics {
    #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub nd: f64,
    pub ulcv: Option<f64>,
}

pub fn layout_metrics(coords: &[Point], edges: &[(usize, usize)]) -> Result<LayoutMetrics> {
    Ok(LayoutMetrics {
        nd: node_distribution(coords)?,
        ulcv: ulcv(coords, edges),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nd_examples() {
        assert_eq!(node_distribution(&[[0.0, 0.0], [1.0, 0.0]]).unwrap(), 1.0);
        let h = 3f64.sqrt() / 2.0;
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.5, h]];
        assert!((node_distribution(&tri).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(
            node_distribution(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]).unwrap(),
            f64::INFINITY
        );
        assert!(node_distribution(&[[0.0, 0.0]]).is_err());
    }

    #[test]
    fn ulcv_examples() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [4.0, 0.0]];
        assert_eq!(ulcv(&pts, &[(0, 1), (1, 2)]), Some(0.5));
        assert_eq!(ulcv(&pts, &[(0, 1)]), Some(0.0));
        assert_eq!(ulcv(&pts, &[]), None);
        assert_eq!(ulcv(&[[0.0, 0.0], [0.0, 0.0]], &[(0, 1)]), None);
    }

    #[test]
    fn bound_examples() {
        assert!((nd_bound(10, 20) - 13.438_611_86).abs() < 1e-6);
        assert!(ulcv_bound(0.25).is_none());
        let b = ulcv_bound(0.2).unwrap();
        assert!((b - ((1.0f64 / 0.32).ln() - 1.0) / 4.0).abs() < 1e-15);
        assert!((ulcv_alpha_limit() - 0.242_98).abs() < 1e-5);
    }

    #[test]
    fn infinite_nd_serializes_as_text() {
        let m = LayoutMetrics {
            nd: f64::INFINITY,
            ulcv: None,
        };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"nd":"inf","ulcv":null}"#);
        let back: LayoutMetrics = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
