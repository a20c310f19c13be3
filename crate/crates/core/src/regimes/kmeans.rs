use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub n_restarts: usize,
    pub max_iter: usize,
    /// Stop when the relative inertia change falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { k: 4, n_restarts: 20, max_iter: 300, tol: 1e-10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub n_iter: usize,
}

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid; ties go to the lowest index.
pub fn nearest_centroid(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sqdist(p, c);
        if d < bd {
            bd = d;
            best = i;
        }
    }
    best
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sqdist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next].clone());
        let c = centroids.last().unwrap();
        d2.iter_mut().zip(points).for_each(|(d, p)| *d = d.min(sqdist(p, c)));
    }
    centroids
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

fn inertia(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sqdist(p, &centroids[l])).sum()
}

/// Lloyd iterations followed by single-point transfers until neither changes anything.
fn run_once(points: &[Vec<f64>], cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> KMeansFit {
    let k = cfg.k;
    let dim = points[0].len();
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest_centroid(p, &centroids)).collect();
    let mut prev = f64::INFINITY;
    let mut n_iter = 0;
    while n_iter < cfg.max_iter {
        n_iter += 1;
        let (mut c, counts) = means(points, &labels, k, dim);
        // An emptied cluster takes the point farthest from its centroid.
        for e in (0..k).filter(|&j| counts[j] == 0) {
            let far = (0..points.len())
                .max_by(|&a, &b| {
                    sqdist(&points[a], &centroids[labels[a]]).total_cmp(&sqdist(&points[b], &centroids[labels[b]]))
                })
                .unwrap();
            c[e] = points[far].clone();
            labels[far] = e;
        }
        centroids = c;
        let new_labels: Vec<usize> = points.iter().map(|p| nearest_centroid(p, &centroids)).collect();
        let inert = inertia(points, &new_labels, &centroids);
        let fixpoint = new_labels == labels;
        labels = new_labels;
        if fixpoint || (prev - inert).abs() <= cfg.tol * prev.abs() {
            break;
        }
        prev = inert;
    }
    refine_transfers(points, &mut labels, k, dim);
    let (centroids, _) = means(points, &labels, k, dim);
    let inertia = inertia(points, &labels, &centroids);
    KMeansFit { centroids, labels, inertia, n_iter }
}

/// Hartigan-style single-point moves. A move of point x from cluster a (size
/// n_a) to b (size n_b) changes the inertia by
/// n_b/(n_b+1)|x-c_b|^2 - n_a/(n_a-1)|x-c_a|^2.
fn refine_transfers(points: &[Vec<f64>], labels: &mut [usize], k: usize, dim: usize) {
    let (mut cent, mut counts) = means(points, labels, k, dim);
    for _sweep in 0..100 {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let a = labels[i];
            if counts[a] <= 1 {
                continue;
            }
            let na = counts[a] as f64;
            let loss = na / (na - 1.0) * sqdist(p, &cent[a]);
            let mut best = (a, 0.0);
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let gain = nb / (nb + 1.0) * sqdist(p, &cent[b]) - loss;
                if gain < best.1 - 1e-12 * loss.max(1e-300) {
                    best = (b, gain);
                }
            }
            let b = best.0;
            if b != a {
                for d in 0..dim {
                    cent[a][d] = (cent[a][d] * na - p[d]) / (na - 1.0);
                    let nb = counts[b] as f64;
                    cent[b][d] = (cent[b][d] * nb + p[d]) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[b] += 1;
                labels[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Best-of-restarts k-means++/Lloyd clustering. Deterministic for a given seed.
pub fn fit_kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansFit> {
    if cfg.k == 0 || cfg.n_restarts == 0 {
        return Err(Error::Argument("k and n_restarts must be positive".into()));
    }
    if points.is_empty() {
        return Err(Error::Empty("no points to cluster".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape("points differ in dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("non-finite clustering input".into()));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.iter().any(|q| *q == p) {
            distinct.push(p);
            if distinct.len() >= cfg.k {
                break;
            }
        }
    }
    if distinct.len() < cfg.k {
        return Err(Error::Degenerate(format!(
            "{} distinct points cannot form {} clusters",
            distinct.len(),
            cfg.k
        )));
    }
    let fits: Vec<KMeansFit> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64));
            run_once(points, cfg, &mut rng)
        })
        .collect();
    let best = fits
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.inertia.total_cmp(&b.inertia).then(i.cmp(j)))
        .map(|(_, f)| f)
        .unwrap();
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_obvious_clusters() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(vec![i as f64 * 0.01, 0.0]);
            pts.push(vec![10.0 + i as f64 * 0.01, 5.0]);
        }
        let fit = fit_kmeans(&pts, &KMeansConfig { k: 2, ..Default::default() }).unwrap();
        for i in 0..10 {
            assert_eq!(fit.labels[2 * i], fit.labels[0]);
            assert_eq!(fit.labels[2 * i + 1], fit.labels[1]);
        }
        assert_ne!(fit.labels[0], fit.labels[1]);
    }

    #[test]
    fn too_few_distinct_points() {
        let pts = vec![vec![1.0], vec![1.0], vec![2.0]];
        let err = fit_kmeans(&pts, &KMeansConfig { k: 3, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let c = vec![vec![1.0], vec![-1.0]];
        assert_eq!(nearest_centroid(&[0.0], &c), 0);
    }
}
