//! A compact neighbor-embedding layout in the style of UMAP: fuzzy k-NN
//! graph, PCA initialization, and SGD with negative sampling on the
//! low-dimensional cross-entropy. Not output-compatible with the reference
//! library.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{pca_fit_transform, sq_dist};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UmapConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub out_dim: usize,
    pub epochs: usize,
    pub negative_samples: usize,
    pub learning_rate: f64,
}

impl Default for UmapConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 5,
            min_dist: 0.0,
            spread: 1.0,
            out_dim: 2,
            epochs: 500,
            negative_samples: 5,
            learning_rate: 1.0,
        }
    }
}

/// Fits `1 / (1 + a x^(2b))` to the target membership curve (1 up to
/// `min_dist`, then `exp(-(x - min_dist) / spread)`) by damped Gauss-Newton
/// on 300 samples over `[0, 3 spread]`.
pub fn fit_ab(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (1..=300).map(|i| 3.0 * spread * i as f64 / 300.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    let residuals = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };
    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut cost = residuals(a, b);
    for _ in 0..500 {
        // normal equations of the 2-parameter least-squares problem
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            let p = x.powf(2.0 * b);
            let f = 1.0 / (1.0 + a * p);
            let da = -p * f * f;
            let db = -a * p * 2.0 * x.ln() * f * f;
            let r = f - y;
            jtj[0][0] += da * da;
            jtj[0][1] += da * db;
            jtj[1][1] += db * db;
            jtr[0] += da * r;
            jtr[1] += db * r;
        }
        let m00 = jtj[0][0] * (1.0 + lambda);
        let m11 = jtj[1][1] * (1.0 + lambda);
        let det = m00 * m11 - jtj[0][1] * jtj[0][1];
        if det == 0.0 {
            break;
        }
        let step_a = (m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let step_b = (m00 * jtr[1] - jtj[0][1] * jtr[0]) / det;
        let (na, nb) = (a - step_a, b - step_b);
        let nc = if na > 0.0 && nb > 0.0 { residuals(na, nb) } else { f64::INFINITY };
        if nc < cost {
            let done = cost - nc < 1e-15 * cost.max(1e-300);
            (a, b, cost) = (na, nb, nc);
            lambda *= 0.3;
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

/// Symmetrized fuzzy k-NN membership graph as `(i, j, weight)` with `i < j`.
fn fuzzy_graph(points: &[Vec<f64>], k: usize) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    let target = (k as f64).log2();
    let mut directed = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut nbrs: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (sq_dist(&points[i], &points[j]).sqrt(), j))
            .collect();
        nbrs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        nbrs.truncate(k);
        let rho = nbrs.iter().map(|d| d.0).find(|&d| d > 0.0).unwrap_or(0.0);
        let mass = |sigma: f64| -> f64 { nbrs.iter().map(|&(d, _)| (-(d - rho).max(0.0) / sigma).exp()).sum() };
        let (mut lo, mut hi, mut sigma) = (0.0, f64::INFINITY, 1.0);
        for _ in 0..64 {
            let m = mass(sigma);
            if (m - target).abs() < 1e-5 {
                break;
            }
            if m > target {
                hi = sigma;
                sigma = (lo + hi) / 2.0;
            } else {
                lo = sigma;
                sigma = if hi.is_finite() { (lo + hi) / 2.0 } else { sigma * 2.0 };
            }
        }
        let mean_d = nbrs.iter().map(|d| d.0).sum::<f64>() / nbrs.len() as f64;
        sigma = sigma.max(1e-3 * mean_d).max(f64::MIN_POSITIVE);
        for &(d, j) in &nbrs {
            directed[i][j] = (-(d - rho).max(0.0) / sigma).exp();
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (directed[i][j], directed[j][i]);
            let w = a + b - a * b;
            if w > 0.0 {
                edges.push((i, j, w));
            }
        }
    }
    edges
}

fn clip(v: f64) -> f64 {
    v.clamp(-4.0, 4.0)
}

/// Low-dimensional layout of `points`. Deterministic for a fixed seed.
pub fn umap_lite(points: &[Vec<f64>], config: &UmapConfig, seed_value: u64) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    let k = config.n_neighbors;
    if k == 0 || config.out_dim == 0 {
        return Err(Error::Invalid("neighbors and output dimension must be positive".into()));
    }
    if n <= k {
        return Err(Error::TooFewSamples { needed: k + 1, got: n });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Invalid("points must share a width".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("layout input".into()));
    }
    let (a, b) = fit_ab(config.spread, config.min_dist);
    let edges = fuzzy_graph(points, k);
    let mut rng = seed::rng_for(seed_value, "umap", &[]);

    let mut y: Vec<Vec<f64>> = match pca_fit_transform(points, config.out_dim.min(dim)) {
        Ok(p) => {
            let max = p.projected.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            let s = if max > 0.0 { 10.0 / max } else { 1.0 };
            p.projected
                .iter()
                .map(|q| {
                    let mut v: Vec<f64> = q.iter().map(|x| x * s).collect();
                    v.resize(config.out_dim, 0.0);
                    v
                })
                .collect()
        }
        Err(Error::DegenerateData) => (0..n)
            .map(|_| (0..config.out_dim).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect(),
        Err(e) => return Err(e),
    };
    // small jitter so coincident inputs separate
    for v in y.iter_mut().flatten() {
        *v += rng.random_range(-1e-4..1e-4);
    }

    let w_max = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let period: Vec<f64> = edges.iter().map(|e| w_max / e.2).collect();
    let mut next_due = period.clone();
    let epochs = config.epochs.max(1);
    let mut delta = vec![0.0; config.out_dim];
    for epoch in 0..epochs {
        let alpha = config.learning_rate * (1.0 - epoch as f64 / epochs as f64);
        let now = epoch as f64 + 1.0;
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            if next_due[e] > now {
                continue;
            }
            next_due[e] += period[e];
            let d2 = sq_dist(&y[i], &y[j]);
            if d2 > 0.0 {
                let coef = -2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b));
                for c in 0..config.out_dim {
                    delta[c] = clip(coef * (y[i][c] - y[j][c])) * alpha;
                }
                for c in 0..config.out_dim {
                    y[i][c] += delta[c];
                    y[j][c] -= delta[c];
                }
            }
            for _ in 0..config.negative_samples {
                let m = rng.random_range(0..n);
                if m == i {
                    continue;
                }
                let d2 = sq_dist(&y[i], &y[m]);
                let coef = if d2 > 0.0 { 2.0 * b / ((1e-3 + d2) * (1.0 + a * d2.powf(b))) } else { 0.0 };
                for c in 0..config.out_dim {
                    let g = if coef > 0.0 { clip(coef * (y[i][c] - y[m][c])) } else { 4.0 };
                    y[i][c] += g * alpha;
                }
            }
        }
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("layout".into()));
    }
    Ok(y)
}
