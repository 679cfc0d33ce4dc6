use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::EmbedError;

/// Result of projecting onto the leading principal axes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    /// One row of `out_dims` coordinates per input vector.
    pub coords: Vec<Vec<f64>>,
    /// Unit principal axes, one per output dimension.
    pub components: Vec<Vec<f64>>,
    /// Share of total variance per output dimension, non-increasing.
    pub explained_variance_ratio: Vec<f64>,
    /// Set when the data has no variance; coordinates are then all zero.
    pub zero_variance: bool,
}

/// Mean-centred PCA. Eigenvectors come from the d x d covariance when
/// d <= n and from the n x n Gram matrix otherwise. Each axis is oriented so
/// its largest-magnitude loading is positive (first such index on ties).
pub fn pca_project(vectors: &[Vec<f64>], out_dims: usize) -> Result<Projection, EmbedError> {
    let n = vectors.len();
    if n < out_dims + 1 {
        return Err(EmbedError::TooFewVectors {
            needed: out_dims + 1,
            got: n,
        });
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(EmbedError::Ragged);
    }
    if out_dims == 0 || out_dims > d {
        return Err(EmbedError::BadOutDims { dim: d, out_dims });
    }
    let mut x = DMatrix::from_fn(n, d, |i, j| vectors[i][j]);
    for j in 0..d {
        let mean = x.column(j).sum() / n as f64;
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let total: f64 = x.iter().map(|v| v * v).sum();
    let scale = vectors.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if total <= (1e-12 * scale).powi(2) * (n * d) as f64 {
        return Ok(Projection {
            coords: vec![vec![0.0; out_dims]; n],
            components: (0..out_dims)
                .map(|k| (0..d).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
                .collect(),
            explained_variance_ratio: vec![0.0; out_dims],
            zero_variance: true,
        });
    }

    let (values, axes): (Vec<f64>, Vec<nalgebra::DVector<f64>>) = if d <= n {
        let cov = x.transpose() * &x;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order
            .iter()
            .take(out_dims)
            .map(|&i| (eig.eigenvalues[i].max(0.0), eig.eigenvectors.column(i).into_owned()))
            .unzip()
    } else {
        let gram = &x * x.transpose();
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order
            .iter()
            .take(out_dims)
            .map(|&i| {
                let lambda = eig.eigenvalues[i].max(0.0);
                let v = x.transpose() * eig.eigenvectors.column(i);
                let norm = v.norm();
                let v = if norm > 0.0 {
                    v / norm
                } else {
                    nalgebra::DVector::from_fn(d, |j, _| if j == 0 { 1.0 } else { 0.0 })
                };
                (lambda, v)
            })
            .unzip()
    };

    let mut components = Vec::with_capacity(out_dims);
    for mut axis in axes {
        let mut best = 0;
        for j in 1..d {
            if axis[j].abs() > axis[best].abs() {
                best = j;
            }
        }
        if axis[best] < 0.0 {
            axis.neg_mut();
        }
        components.push(axis);
    }
    let coords = (0..n)
        .map(|i| components.iter().map(|c| x.row(i).dot(&c.transpose())).collect())
        .collect();
    Ok(Projection {
        coords,
        components: components.iter().map(|c| c.iter().copied().collect()).collect(),
        explained_variance_ratio: values.iter().map(|v| v / total).collect(),
        zero_variance: false,
    })
}
