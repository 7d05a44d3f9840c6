use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fitted principal-component projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit principal directions, one per output dimension, by decreasing
    /// variance. Each is signed so its largest-magnitude entry is positive.
    pub components: Vec<Vec<f64>>,
    /// Population variance along each component.
    pub variances: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    pub projected: Vec<Vec<f64>>,
}

impl Pca {
    pub fn transform(&self, point: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(point).zip(&self.mean).map(|((w, x), m)| w * (x - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, k) in self.components.iter().zip(coords) {
            for (o, w) in out.iter_mut().zip(c) {
                *o += k * w;
            }
        }
        out
    }
}

pub fn pca_fit_transform(points: &[Vec<f64>], out_dim: usize) -> Result<Pca> {
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::Invalid("points must share a positive width".into()));
    }
    if out_dim == 0 || out_dim > dim {
        return Err(Error::Invalid(format!("output dimension {out_dim} outside [1, {dim}]")));
    }
    if n < out_dim {
        return Err(Error::TooFewSamples { needed: out_dim, got: n });
    }
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for p in points {
        for i in 0..dim {
            let di = p[i] - mean[i];
            for j in i..dim {
                cov[(i, j)] += di * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let total: f64 = (0..dim).map(|i| cov[(i, i)]).sum();
    if !total.is_finite() {
        return Err(Error::NonFinite("covariance".into()));
    }
    if total == 0.0 {
        return Err(Error::DegenerateData);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(out_dim);
    let mut variances = Vec::with_capacity(out_dim);
    for &k in order.iter().take(out_dim) {
        let mut c: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = c
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > c[best].abs() { i } else { best });
        if c[pivot] < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(c);
        variances.push(eig.eigenvalues[k].max(0.0));
    }
    let explained_ratio = variances.iter().map(|v| v / total).collect();
    let mut pca = Pca {
        mean,
        components,
        variances,
        explained_ratio,
        projected: Vec::new(),
    };
    pca.projected = points.iter().map(|p| pca.transform(p)).collect();
    Ok(pca)
}
