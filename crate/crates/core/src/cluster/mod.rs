//! Partitions of a customer distance matrix, validity indices and model
//! selection over method, measure and segment count.

mod agglomerative;
mod grid;
mod kmeans;
mod spectral;
mod validity;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tsdist::{DistanceMatrix, Measure};

pub use agglomerative::{agglomerative, dendrogram, Dendrogram, Linkage, Merge};
pub use grid::{grid_search, GridCell, GridConfig, GridRow, GridSearchReport};
pub use kmeans::{baseline_weights, kmeans, kmeans_baseline, FeatureSubset, KMeansConfig, KMeansFit, Weighting};
pub use spectral::{spectral, spectral_from_embedding, Sigma, SpectralConfig, SpectralEmbedding};
pub use validity::{calinski_harabasz, silhouette_index, silhouette_samples};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClusterError {
    #[error("k = {k} is out of range for {n} items (allowed {min}..={max})")]
    KOutOfRange { k: usize, n: usize, min: usize, max: usize },
    #[error("k = {k} exceeds the {distinct} distinct rows")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("index undefined: {0}")]
    UndefinedIndex(&'static str),
    #[error("invalid labels: {0}")]
    Labels(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("every grid cell failed; first error: {0}")]
    AllFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hierarchical,
    Spectral,
    Kmeans,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Hierarchical => "Hierarchical",
            Method::Spectral => "Spectral",
            Method::Kmeans => "K-Means",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "hierarchical" | "agglomerative" => Ok(Method::Hierarchical),
            "spectral" => Ok(Method::Spectral),
            "kmeans" | "k-means" => Ok(Method::Kmeans),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// A scored partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub labels: Vec<usize>,
    pub k: usize,
    pub method: Method,
    pub measure: Measure,
    pub silhouette: f64,
    /// `None` when every cluster has collapsed to a single point, where the
    /// index divides by a zero within-cluster dispersion.
    pub calinski_harabasz: Option<f64>,
    pub config_fingerprint: String,
}

impl SegmentationResult {
    /// Scores `labels` on `d`; labels are renumbered by first occurrence.
    pub fn evaluate(
        d: &DistanceMatrix,
        labels: &[usize],
        method: Method,
        config_fingerprint: String,
    ) -> Result<Self, ClusterError> {
        let labels = crate::metrics::canonical_labels(labels);
        let k = check_labels(&labels, d.n())?;
        let ch = match calinski_harabasz(d, &labels) {
            Ok(v) => Some(v),
            Err(ClusterError::UndefinedIndex(m)) if m == validity::ZERO_WITHIN => None,
            Err(e) => return Err(e),
        };
        Ok(SegmentationResult {
            silhouette: silhouette_index(d, &labels)?,
            calinski_harabasz: ch,
            labels,
            k,
            method,
            measure: d.measure,
            config_fingerprint,
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        cluster_sizes(&self.labels, self.k)
    }
}

pub(crate) fn cluster_sizes(labels: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

/// Checks that `labels` covers `0..k` without gaps; returns `k`.
pub(crate) fn check_labels(labels: &[usize], n: usize) -> Result<usize, ClusterError> {
    if labels.len() != n {
        return Err(ClusterError::Labels(format!("{} labels for {n} items", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let sizes = cluster_sizes(labels, k);
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(ClusterError::Labels(format!("cluster {c} is empty")));
    }
    Ok(k)
}

pub(crate) fn check_k(k: usize, n: usize, min: usize, max: usize) -> Result<(), ClusterError> {
    if k < min || k > max {
        return Err(ClusterError::KOutOfRange { k, n, min, max });
    }
    Ok(())
}
