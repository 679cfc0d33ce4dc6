use std::collections::BTreeSet;

use serde::Serialize;

use super::{pca_project, silhouette, Distance, EmbedError, EmbeddingRecord, EntityKind};
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    pub entity_id: String,
    pub kind: EntityKind,
    pub pair_id: Option<String>,
    pub tissue_label: Option<String>,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerStats {
    pub layer: u32,
    pub entities: usize,
    /// Silhouette by tissue label; `None` with fewer than two labels.
    pub silhouette: Option<f64>,
    /// Mean distance between members of the same pair.
    pub intra_pair_mean: Option<f64>,
    /// Mean distance between members of different pairs.
    pub inter_pair_mean: Option<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub points: Vec<Point>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub metric: Distance,
    pub layers: Vec<LayerStats>,
}

fn mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Per requested layer: tissue silhouette and pair distances in the original
/// space, plus a 2D PCA projection. Records are put in a canonical order
/// first, so the result does not depend on input order.
pub fn layer_report(
    records: &[EmbeddingRecord],
    layers: &[u32],
    metric: Distance,
    exec: Execution,
) -> Result<LayerReport, EmbedError> {
    let available: BTreeSet<u32> = records.iter().map(|r| r.layer).collect();
    let missing: Vec<u32> = layers.iter().copied().filter(|l| !available.contains(l)).collect();
    if !missing.is_empty() {
        return Err(EmbedError::MissingLayers {
            missing,
            available: available.into_iter().collect(),
        });
    }
    let mut out = Vec::with_capacity(layers.len());
    for &layer in layers {
        let mut rs: Vec<&EmbeddingRecord> = records.iter().filter(|r| r.layer == layer).collect();
        rs.sort_by(|a, b| {
            (&a.entity_id, a.kind, &a.pair_id, &a.tissue_label)
                .cmp(&(&b.entity_id, b.kind, &b.pair_id, &b.tissue_label))
                .then_with(|| {
                    a.vector
                        .iter()
                        .map(|v| v.to_bits())
                        .cmp(b.vector.iter().map(|v| v.to_bits()))
                })
        });
        let vectors: Vec<Vec<f64>> = rs.iter().map(|r| r.vector.clone()).collect();
        let labels: Vec<Option<String>> = rs.iter().map(|r| r.tissue_label.clone()).collect();
        let mut warnings = Vec::new();

        let silhouette = match silhouette(&vectors, &labels, metric, exec) {
            Ok(s) => Some(s),
            Err(EmbedError::TooFewLabels(_)) => {
                warnings.push("fewer than two tissue labels; silhouette skipped".to_string());
                None
            }
            Err(e) => return Err(e),
        };

        let pair_sums = exec.map_range(rs.len(), |i| {
            let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
            let Some(pi) = &rs[i].pair_id else {
                return (intra, ni, inter, nx);
            };
            for j in i + 1..rs.len() {
                let Some(pj) = &rs[j].pair_id else { continue };
                let d = metric.between(&rs[i].vector, &rs[j].vector);
                if pi == pj {
                    intra += d;
                    ni += 1;
                } else {
                    inter += d;
                    nx += 1;
                }
            }
            (intra, ni, inter, nx)
        });
        let (intra, ni, inter, nx) = pair_sums
            .into_iter()
            .fold((0.0, 0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3));

        let projection = pca_project(&vectors, 2)?;
        if projection.zero_variance {
            warnings.push("embeddings have zero variance; coordinates are all zero".to_string());
        }
        let points = rs
            .iter()
            .zip(&projection.coords)
            .map(|(r, c)| Point {
                entity_id: r.entity_id.clone(),
                kind: r.kind,
                pair_id: r.pair_id.clone(),
                tissue_label: r.tissue_label.clone(),
                x: c[0],
                y: c[1],
            })
            .collect();
        out.push(LayerStats {
            layer,
            entities: rs.len(),
            silhouette,
            intra_pair_mean: mean(intra, ni),
            inter_pair_mean: mean(inter, nx),
            explained_variance_ratio: projection.explained_variance_ratio,
            points,
            warnings,
        });
    }
    Ok(LayerReport { metric, layers: out })
}
