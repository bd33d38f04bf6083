use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

const RESTARTS: u64 = 10;
const MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterLabels {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: ClusterLabels,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_rows(points: ArrayView2<f64>) -> usize {
    let mut rows: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows.dedup();
    rows.len()
}

/// Lloyd's algorithm from k-means++ seeds; the best of 10 restarts by
/// within-cluster sum of squares (earliest restart on ties).
pub fn kmeans(points: ArrayView2<f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite point coordinate"));
    }
    let distinct = distinct_rows(points);
    if k > distinct {
        return Err(Error::TooManyClusters { k, distinct });
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..RESTARTS {
        let res = lloyd(points, k, seed, r);
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus(points: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && u < d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            // rounding can walk past the end; take the last positive weight
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centroids
}

fn lloyd(points: ArrayView2<f64>, k: usize, seed: u64, restart: u64) -> KMeansResult {
    let n = points.nrows();
    let dim = points.ncols();
    let mut rng = stream_rng(seed, restart);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut inertia;
    let mut iter = 0;
    loop {
        let mut changed = false;
        inertia = 0.0;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(points.row(i), centroids.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            if labels[i] != best.0 {
                labels[i] = best.0;
                changed = true;
            }
            dist[i] = best.1;
            inertia += best.1;
        }
        history.push(inertia);
        iter += 1;
        if !changed || iter >= MAX_ITER {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            let mut row = sums.row_mut(labels[i]);
            row += &points.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = centroids.row_mut(c);
                row.assign(&sums.row(c));
                row.mapv_inplace(|v| v / counts[c] as f64);
            } else {
                // reseed an empty cluster at the worst-served point
                let far = (0..n).fold(0, |m, i| if dist[i] > dist[m] { i } else { m });
                centroids.row_mut(c).assign(&points.row(far));
                dist[far] = 0.0;
            }
        }
    }
    KMeansResult {
        labels: ClusterLabels { labels, k },
        centroids,
        inertia,
        history,
    }
}

/// Mean silhouette with Euclidean distance; members of singleton clusters
/// score 0.
pub fn silhouette_score(points: ArrayView2<f64>, labels: &ClusterLabels) -> Result<f64> {
    let n = points.nrows();
    if labels.labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{} points, {} labels", n, labels.labels.len())));
    }
    if labels.k < 2 {
        return Err(Error::invalid("silhouette needs at least two clusters"));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let sizes = labels.sizes();
    let mut total = 0.0;
    let mut sums = vec![0.0; labels.k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels.labels[j]] += sq_dist(points.row(i), points.row(j)).sqrt();
            }
        }
        let own = labels.labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..labels.k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}
