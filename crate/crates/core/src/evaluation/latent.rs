use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::autograd::Tensor;
use crate::error::{Error, Result};

pub const MIN_INVARIANCE_PAIRS: usize = 50;

/// Mean distance between mean latents of the two views of each scene, divided
/// by the mean distance between views of different scenes (view 1 of scene
/// `i` against view 2 of scene `i + 1`, cyclically).
pub fn invariance_ratio(pairs: &[(Tensor, Tensor)]) -> Result<f64> {
    if pairs.len() < MIN_INVARIANCE_PAIRS {
        return Err(Error::SampleSize {
            needed: MIN_INVARIANCE_PAIRS,
            got: pairs.len(),
        });
    }
    let n = pairs.len();
    let same: f64 = pairs.iter().map(|(a, b)| a.l2_distance(b)).sum::<f64>() / n as f64;
    let diff: f64 = (0..n).map(|i| pairs[i].0.l2_distance(&pairs[(i + 1) % n].1)).sum::<f64>() / n as f64;
    if diff == 0.0 {
        return Err(Error::Input("all latents coincide; ratio undefined".into()));
    }
    Ok(same / diff)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// One row of `dims` coordinates per input point.
    pub coords: Vec<Vec<f64>>,
    /// Variance captured by each retained direction.
    pub variances: Vec<f64>,
    pub rank_deficient: bool,
}

/// Projects mean-centred points onto their leading principal directions.
///
/// Each axis is oriented so that its largest-magnitude coordinate is positive.
pub fn pca_project(points: &[Vec<f64>], dims: usize) -> Result<Projection> {
    let n = points.len();
    if dims == 0 || n < dims + 1 {
        return Err(Error::SampleSize {
            needed: dims + 1,
            got: n,
        });
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Dimension("points of differing length".into()));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n as f64;
        }
    }
    let centred = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    // Eigenvectors of the n×n Gram matrix give the scores directly: X Xᵀ u = λ u
    // implies the projection onto the k-th direction is √λ_k · u_k.
    let gram = &centred * centred.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top * 1e-10 + 1e-300;
    let mut coords = vec![vec![0.0; dims]; n];
    let mut variances = Vec::with_capacity(dims);
    let mut rank_deficient = false;
    for (k, &idx) in order.iter().take(dims).enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0);
        if lambda <= tol {
            rank_deficient = true;
            variances.push(0.0);
            continue;
        }
        let col = eig.eigenvectors.column(idx);
        let pivot = (0..n).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).unwrap_or(0);
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][k] = sign * lambda.sqrt() * col[i];
        }
        variances.push(lambda / (n - 1) as f64);
    }
    if rank_deficient {
        warn!("PCA: covariance has rank below {dims}; trailing coordinates are zero");
    }
    Ok(Projection {
        coords,
        variances,
        rank_deficient,
    })
}

/// Fraction of points whose nearest centroid (Euclidean) is the one at their label.
pub fn nearest_centroid_accuracy(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> Result<f64> {
    if points.len() != labels.len() || points.is_empty() {
        return Err(Error::Input(format!("{} points vs {} labels", points.len(), labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= centroids.len()) {
        return Err(Error::Input(format!("label {l} without a centroid")));
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let hits = points
        .iter()
        .zip(labels)
        .filter(|(p, &l)| {
            let best = (0..centroids.len())
                .min_by(|&a, &b| dist(p, &centroids[a]).total_cmp(&dist(p, &centroids[b])))
                .unwrap();
            best == l
        })
        .count();
    Ok(hits as f64 / points.len() as f64)
}
