use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::par::Execution;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
    /// 1 - cosine similarity; zero vectors are at distance 1 from everything.
    Cosine,
}

impl Distance {
    pub fn between(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Distance::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    (1.0 - dot / (na * nb)).max(0.0)
                }
            }
        }
    }
}

/// Mean silhouette over labelled points; `None` labels are left out. A point
/// alone in its cluster scores 0.
pub fn silhouette(
    vectors: &[Vec<f64>],
    labels: &[Option<String>],
    metric: Distance,
    exec: Execution,
) -> Result<f64, EmbedError> {
    if vectors.len() != labels.len() {
        return Err(EmbedError::LengthMismatch);
    }
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut points: Vec<(&[f64], usize)> = Vec::new();
    for (v, l) in vectors.iter().zip(labels) {
        if let Some(l) = l {
            let next = ids.len();
            let id = *ids.entry(l.as_str()).or_insert(next);
            points.push((v, id));
        }
    }
    let k = ids.len();
    if k < 2 {
        return Err(EmbedError::TooFewLabels(k));
    }
    let mut sizes = vec![0usize; k];
    for &(_, c) in &points {
        sizes[c] += 1;
    }
    let scores = exec.map(&points, |&(v, c)| {
        if sizes[c] == 1 {
            return 0.0;
        }
        let mut sums = vec![0.0; k];
        for &(w, d) in &points {
            sums[d] += metric.between(v, w);
        }
        let a = sums[c] / (sizes[c] - 1) as f64;
        let b = (0..k)
            .filter(|&d| d != c)
            .map(|d| sums[d] / sizes[d] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m == 0.0 {
            0.0
        } else {
            (b - a) / m
        }
    });
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_clusters_score_high() {
        let mut v = Vec::new();
        let mut l = Vec::new();
        for i in 0..5 {
            v.push(vec![i as f64 * 0.01, 0.0]);
            l.push(Some("a".to_string()));
            v.push(vec![100.0 + i as f64 * 0.01, 0.0]);
            l.push(Some("b".to_string()));
        }
        v.push(vec![50.0, 50.0]);
        l.push(None);
        let s = silhouette(&v, &l, Distance::Euclidean, Execution::Sequential).unwrap();
        assert!(s > 0.99);
    }

    #[test]
    fn single_label_is_error() {
        let v = vec![vec![0.0], vec![1.0]];
        let l = vec![Some("a".to_string()), Some("a".to_string())];
        assert!(matches!(
            silhouette(&v, &l, Distance::Euclidean, Execution::Sequential),
            Err(EmbedError::TooFewLabels(1))
        ));
    }

    #[test]
    fn cosine_distance() {
        assert!(Distance::Cosine.between(&[1.0, 0.0], &[2.0, 0.0]).abs() < 1e-12);
        assert!((Distance::Cosine.between(&[1.0, 0.0], &[0.0, 3.0]) - 1.0).abs() < 1e-12);
    }
}
