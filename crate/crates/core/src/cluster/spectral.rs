use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{check_k, kmeans, ClusterError, KMeansConfig, Method, SegmentationResult};
use crate::tsdist::DistanceMatrix;
use crate::Exec;

/// Gaussian kernel bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigma {
    /// Median off-diagonal distance.
    #[default]
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub sigma: Sigma,
    pub kmeans: KMeansConfig,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { sigma: Sigma::Median, kmeans: KMeansConfig::default() }
    }
}

/// Eigenvectors of `D^-1/2 A D^-1/2`, by decreasing eigenvalue.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub sigma: f64,
    pub eigenvalues: Vec<f64>,
    vectors: Array2<f64>,
}

fn median_off_diagonal(d: &DistanceMatrix) -> f64 {
    let n = d.n();
    let mut v: Vec<f64> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| d.get(i, j)).collect();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        (v[m / 2 - 1] + v[m / 2]) / 2.0
    }
}

impl SpectralEmbedding {
    pub fn new(d: &DistanceMatrix, sigma: Sigma) -> Result<Self, ClusterError> {
        let n = d.n();
        if n < 2 {
            return Err(ClusterError::Numerical("spectral embedding needs at least two items".into()));
        }
        let sigma = match sigma {
            Sigma::Median => median_off_diagonal(d),
            Sigma::Fixed(s) => s,
        };
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ClusterError::Numerical(format!("affinity bandwidth sigma = {sigma} is not positive")));
        }
        let two_s2 = 2.0 * sigma * sigma;
        let mut a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (-d.get(i, j).powi(2) / two_s2).exp() });
        if a.iter().all(|&v| v < f64::MIN_POSITIVE) {
            return Err(ClusterError::Numerical(format!("affinity collapsed to zero at sigma = {sigma}")));
        }
        let inv_sqrt_deg: Vec<f64> = a
            .row_iter()
            .map(|r| {
                let s: f64 = r.sum();
                if s > 0.0 {
                    1.0 / s.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
            }
        }
        let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)
            .ok_or_else(|| ClusterError::Numerical(format!("eigen-solver did not converge at sigma = {sigma}")))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
        let vectors = Array2::from_shape_fn((n, n), |(i, c)| eig.eigenvectors[(i, order[c])]);
        Ok(SpectralEmbedding { sigma, eigenvalues: order.iter().map(|&c| eig.eigenvalues[c]).collect(), vectors })
    }

    /// Rows of the top-`k` eigenvectors, each scaled to unit length.
    pub fn rows(&self, k: usize) -> Array2<f64> {
        let n = self.vectors.nrows();
        let mut out = self.vectors.slice(ndarray::s![.., ..k]).to_owned();
        for i in 0..n {
            let norm = out.row(i).dot(&out.row(i)).sqrt();
            if norm > 0.0 {
                out.row_mut(i).mapv_inplace(|v| v / norm);
            }
        }
        out
    }
}

pub fn spectral(d: &DistanceMatrix, k: usize, cfg: &SpectralConfig, exec: Exec) -> Result<SegmentationResult, ClusterError> {
    check_k(k, d.n(), 2, d.n().saturating_sub(1))?;
    let emb = SpectralEmbedding::new(d, cfg.sigma)?;
    spectral_from_embedding(d, &emb, k, cfg, exec)
}

/// Partition from a precomputed embedding of `d`.
pub fn spectral_from_embedding(
    d: &DistanceMatrix,
    emb: &SpectralEmbedding,
    k: usize,
    cfg: &SpectralConfig,
    exec: Exec,
) -> Result<SegmentationResult, ClusterError> {
    check_k(k, d.n(), 2, d.n().saturating_sub(1))?;
    let fit = kmeans(&emb.rows(k), k, &cfg.kmeans, exec)?;
    SegmentationResult::evaluate(d, &fit.labels, Method::Spectral, crate::fingerprint(&(Method::Spectral, d.measure, k, cfg)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsdist::Measure;

    fn blocks() -> DistanceMatrix {
        let group = [0, 1, 0, 1, 0, 1, 1];
        let n = group.len();
        let d = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                0.0
            } else if group[i] == group[j] {
                1.0 + ((i + j) % 3) as f64 * 0.1
            } else {
                30.0
            }
        });
        DistanceMatrix::new(Measure::Cid, d).unwrap()
    }

    #[test]
    fn two_blocks_recovered() {
        let cfg = SpectralConfig { sigma: Sigma::Fixed(2.0), ..Default::default() };
        let r = spectral(&blocks(), 2, &cfg, Exec::Sequential).unwrap();
        assert_eq!(r.labels, vec![0, 1, 0, 1, 0, 1, 1]);
    }

    #[test]
    fn scale_invariant_under_median_sigma() {
        let d = blocks();
        let a = spectral(&d, 2, &SpectralConfig::default(), Exec::Sequential).unwrap();
        let b = spectral(&d.scaled(17.0), 2, &SpectralConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn collapse_names_sigma() {
        let cfg = SpectralConfig { sigma: Sigma::Fixed(1e-3), ..Default::default() };
        let err = spectral(&blocks(), 2, &cfg, Exec::Sequential).unwrap_err();
        assert!(matches!(&err, ClusterError::Numerical(m) if m.contains("sigma = 0.001")), "{err}");
    }

    #[test]
    fn leading_eigenvalue_is_one() {
        let emb = SpectralEmbedding::new(&blocks(), Sigma::Median).unwrap();
        assert!((emb.eigenvalues[0] - 1.0).abs() < 1e-10);
        assert!(emb.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }
}
