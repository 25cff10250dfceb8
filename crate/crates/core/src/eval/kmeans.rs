use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::{seeded_rng, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: 2,
            restarts: 10,
            max_iters: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    /// One centroid per row.
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    /// Lloyd iterations of the winning restart.
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties) and its distance.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut crate::Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iters: usize) -> KMeansResult {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut current = 0.0;
        let mut dists = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
            current += d;
            dists.push(d);
        }
        assert!(
            current <= inertia * (1.0 + 1e-12) + 1e-12,
            "k-means inertia increased from {inertia} to {current}"
        );
        inertia = current;
        if !changed || iterations == max_iters {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assignments) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut taken = vec![false; points.len()];
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // re-seed with the point farthest from its own centroid
                let far = (0..points.len())
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    });
                if let Some(i) = far {
                    taken[i] = true;
                    centroids[j] = points[i].clone();
                }
            }
        }
    }
    KMeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
    }
}

/// K-Means on the columns of `z`: k-means++ seeding, Lloyd iterations, best
/// of `restarts` by inertia (earliest restart wins ties).
pub fn kmeans(z: &DenseMatrix, cfg: &ClusterConfig) -> Result<KMeansResult> {
    let n = z.cols();
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {}", cfg.k)));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let points: Vec<Vec<f64>> = (0..n).map(|c| z.column(c)).collect();
    let mut best: Option<KMeansResult> = None;
    for r in 0..cfg.restarts {
        let mut rng = seeded_rng(cfg.seed, streams::KMEANS + r as u64);
        let result = lloyd(&points, plus_plus(&points, cfg.k, &mut rng), cfg.max_iters);
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}
