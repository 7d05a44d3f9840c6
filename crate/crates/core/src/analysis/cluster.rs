use serde::{Deserialize, Serialize};

use super::sq_dist;
use crate::error::{Error, Result};

/// Ward merge sequence over a point set.
///
/// Each step merges the active pair with the lowest Ward cost
/// `|A||B| / (|A| + |B|) * |c_A - c_B|^2`; exact ties go to the
/// lexicographically lowest slot pair. The merged cluster keeps the lower
/// slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<(usize, usize, f64)>,
}

impl Dendrogram {
    pub fn build(points: &[Vec<f64>]) -> Result<Self> {
        let n = points.len();
        let mut centroid: Vec<Vec<f64>> = points.to_vec();
        let mut size = vec![1usize; n];
        let mut active: Vec<usize> = (0..n).collect();
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        while active.len() > 1 {
            let mut best: Option<(f64, usize, usize)> = None;
            for (ai, &i) in active.iter().enumerate() {
                for &j in &active[ai + 1..] {
                    let (si, sj) = (size[i] as f64, size[j] as f64);
                    let cost = si * sj / (si + sj) * sq_dist(&centroid[i], &centroid[j]);
                    if best.is_none_or(|(c, _, _)| cost < c) {
                        best = Some((cost, i, j));
                    }
                }
            }
            let (cost, i, j) = best.expect("at least two active clusters");
            if !cost.is_finite() {
                return Err(Error::NonFinite("ward merge cost".into()));
            }
            let (si, sj) = (size[i] as f64, size[j] as f64);
            let merged: Vec<f64> = centroid[i]
                .iter()
                .zip(&centroid[j])
                .map(|(a, b)| (si * a + sj * b) / (si + sj))
                .collect();
            centroid[i] = merged;
            size[i] += size[j];
            active.retain(|&s| s != j);
            merges.push((i, j, cost));
        }
        Ok(Self { n, merges })
    }

    /// `(kept slot, absorbed slot, cost)` in merge order.
    pub fn merges(&self) -> &[(usize, usize, f64)] {
        &self.merges
    }

    /// Assignments after merging down to `k` clusters, labelled by first
    /// appearance.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        if k < 2 || k > self.n {
            return Err(Error::BadK { k, n: self.n });
        }
        let mut slot: Vec<usize> = (0..self.n).collect();
        for &(i, j, _) in &self.merges[..self.n - k] {
            for s in slot.iter_mut() {
                if *s == j {
                    *s = i;
                }
            }
        }
        Ok(canonical_labels(&slot))
    }
}

fn canonical_labels(raw: &[usize]) -> Vec<usize> {
    let mut seen: Vec<usize> = Vec::new();
    raw.iter()
        .map(|r| match seen.iter().position(|s| s == r) {
            Some(p) => p,
            None => {
                seen.push(*r);
                seen.len() - 1
            }
        })
        .collect()
}

/// Ward-linkage agglomerative clustering into `k` clusters.
pub fn agglomerative_cluster(points: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    if k < 2 || k > points.len() {
        return Err(Error::BadK { k, n: points.len() });
    }
    Dendrogram::build(points)?.cut(k)
}

pub fn pairwise_distances(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(&points[i], &points[j]).sqrt();
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

fn silhouette_from(dist: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let canon = canonical_labels(labels);
    let k = canon.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::SingleCluster);
    }
    let mut sizes = vec![0usize; k];
    for &c in &canon {
        sizes[c] += 1;
    }
    let n = canon.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        let own = canon[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            sums[canon[j]] += dist[i][j];
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Mean silhouette coefficient. Points in singleton clusters score 0, as do
/// points whose intra- and nearest-cluster distances are both 0.
pub fn silhouette_score(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if labels.len() != points.len() {
        return Err(Error::shape(format!("{} labels", points.len()), labels.len()));
    }
    silhouette_from(&pairwise_distances(points), labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub candidates: Vec<usize>,
    pub silhouettes: Vec<f64>,
    pub selected: usize,
    pub assignments: Vec<usize>,
}

impl ClusterReport {
    pub fn best_silhouette(&self) -> f64 {
        let i = self.candidates.iter().position(|&k| k == self.selected).expect("selected is a candidate");
        self.silhouettes[i]
    }
}

/// Cluster counts 2..=25 scored by silhouette; the best count wins, ties
/// going to fewer clusters.
pub fn select_clusters(points: &[Vec<f64>]) -> Result<ClusterReport> {
    select_clusters_in(points, 2, 25)
}

pub fn select_clusters_in(points: &[Vec<f64>], k_min: usize, k_max: usize) -> Result<ClusterReport> {
    if k_min < 2 || k_max < k_min {
        return Err(Error::Invalid(format!("cluster range [{k_min}, {k_max}]")));
    }
    if points.len() <= k_max {
        return Err(Error::TooFewSamples {
            needed: k_max + 1,
            got: points.len(),
        });
    }
    let tree = Dendrogram::build(points)?;
    let dist = pairwise_distances(points);
    let candidates: Vec<usize> = (k_min..=k_max).collect();
    let mut silhouettes = Vec::with_capacity(candidates.len());
    let mut best = (k_min, f64::NEG_INFINITY, Vec::new());
    for &k in &candidates {
        let labels = tree.cut(k)?;
        let s = silhouette_from(&dist, &labels)?;
        silhouettes.push(s);
        if s > best.1 {
            best = (k, s, labels);
        }
    }
    Ok(ClusterReport {
        candidates,
        silhouettes,
        selected: best.0,
        assignments: best.2,
    })
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} labels", a.len()), b.len()));
    }
    let (a, b) = (canonical_labels(a), canonical_labels(b));
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(&b) {
        table[x][y] += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(a.len() as u64);
    let expected = if total > 0.0 { rows * cols / total } else { 0.0 };
    let max = (rows + cols) / 2.0;
    if max == expected {
        // both partitions trivial: identical partitions agree perfectly
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}
