use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_k, ClusterError, Method, SegmentationResult};
use crate::features::{Feature, N_FEATURES};
use crate::mcdm::Dimension;
use crate::tsdist::DistanceMatrix;
use crate::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { restarts: 50, seed: 42, max_iter: 300 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Index of the winning restart.
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let v = sq_dist(p, m);
        if v < best.1 {
            best = (c, v);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            while d2[idx] == 0.0 {
                idx -= 1;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<Vec<f64>>, f64) {
    let n = points.len();
    let dim = points[0].len();
    let mut centroids = plus_plus(points, k, rng);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // an emptied cluster takes the point farthest from its centroid
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&i, &j| {
                    let (di, dj) = (sq_dist(&points[i], &centroids[labels[i]]), sq_dist(&points[j], &centroids[labels[j]]));
                    di.total_cmp(&dj).then(j.cmp(&i))
                });
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] = 1;
                centroids[c] = points[i].clone();
            }
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
    (labels, centroids, inertia)
}

fn distinct_rows(points: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = points.iter().map(|p| p.iter().map(|v| (v + 0.0).to_bits()).collect()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// Lloyd's algorithm with k-means++ seeding. Restart `r` draws from
/// stream `r` of a ChaCha generator seeded with `cfg.seed`; the lowest
/// inertia wins, ties going to the earlier restart.
pub fn kmeans(points: &Array2<f64>, k: usize, cfg: &KMeansConfig, exec: Exec) -> Result<KMeansFit, ClusterError> {
    let n = points.nrows();
    check_k(k, n, 2, n)?;
    let rows: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClusterError::Numerical("k-means input contains a non-finite value".into()));
    }
    let distinct = distinct_rows(&rows);
    if k > distinct {
        return Err(ClusterError::TooFewDistinct { k, distinct });
    }
    let fits = exec.map_range(cfg.restarts.max(1), |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        lloyd(&rows, k, cfg.max_iter, &mut rng)
    });
    let (restart, (labels, centroids, inertia)) = fits
        .into_iter()
        .enumerate()
        .reduce(|best, cur| if cur.1 .2 < best.1 .2 { cur } else { best })
        .expect("at least one restart");
    let dim = points.ncols();
    let centroids = Array2::from_shape_vec((k, dim), centroids.concat()).expect("k x dim");
    Ok(KMeansFit { labels, centroids, inertia, restart })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSubset {
    Rfm,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    None,
    FixedEqual,
    Ahp,
}

/// Feature weights for a baseline: features outside `subset` get 0;
/// `None` weights the rest by 1, `FixedEqual` by 0.1, `Ahp` by the
/// composed weights.
pub fn baseline_weights(subset: FeatureSubset, weighting: Weighting, ahp: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
    let mut w = [0.0; N_FEATURES];
    for f in Feature::ALL {
        if subset == FeatureSubset::Rfm && Dimension::of(f) != Dimension::Rfm {
            continue;
        }
        w[f.index()] = match weighting {
            Weighting::None => 1.0,
            Weighting::FixedEqual => 0.1,
            Weighting::Ahp => ahp[f.index()],
        };
    }
    w
}

/// K-means on the aggregate (scaled) feature matrix with column `f`
/// multiplied by `sqrt(w_f)`, so squared distances are `sum w_f dx_f^2`.
/// Scored on the Euclidean distances of the weighted rows.
pub fn kmeans_baseline(
    aggregate: &Array2<f64>,
    k: usize,
    subset: FeatureSubset,
    weighting: Weighting,
    ahp: &[f64; N_FEATURES],
    cfg: &KMeansConfig,
    exec: Exec,
) -> Result<SegmentationResult, ClusterError> {
    if aggregate.ncols() != N_FEATURES {
        return Err(ClusterError::Numerical(format!("expected {N_FEATURES} feature columns, got {}", aggregate.ncols())));
    }
    let w = baseline_weights(subset, weighting, ahp);
    let keep: Vec<usize> = (0..N_FEATURES).filter(|&f| w[f] > 0.0).collect();
    let weighted = Array2::from_shape_fn((aggregate.nrows(), keep.len()), |(i, c)| aggregate[[i, keep[c]]] * w[keep[c]].sqrt());
    let fit = kmeans(&weighted, k, cfg, exec)?;
    let d = DistanceMatrix::euclidean_rows(&weighted);
    SegmentationResult::evaluate(&d, &fit.labels, Method::Kmeans, crate::fingerprint(&(Method::Kmeans, k, subset, weighting, w, cfg)))
}
