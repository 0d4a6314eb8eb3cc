//! Multi-criteria, temporal customer segmentation.
//!
//! The crate is organised as a chain of stages, each usable on its own:
//!
//! - [`ingest`]: parse and clean transaction logs, moment analysis and
//!   skew-reducing transforms.
//! - [`features`]: the per-customer, per-period ten-criteria panel.
//! - [`mcdm`]: AHP pairwise judgments, consistency gating and hierarchical
//!   weight composition.
//! - [`tsdist`]: DTW, CID and CORT dissimilarities and the weighted
//!   customer distance matrix.
//! - [`cluster`]: agglomerative, spectral and k-means partitions, silhouette
//!   and Calinski-Harabasz indices, grid search.
//! - [`stability`]: per-period re-segmentation, volatility, continuity,
//!   transition model and segment score.
//! - [`consensus`]: label-agreement graph, Leiden communities, reconciliation
//!   to a target segment count, contingency reports.
//!
//! Data-parallel loops go through [`Exec`]; building without the `parallel`
//! feature turns every loop sequential.

pub mod cluster;
pub mod consensus;
mod exec;
pub mod features;
pub mod ingest;
pub mod matching;
pub mod mcdm;
pub mod metrics;
pub mod stability;
pub mod tsdist;

pub use exec::Exec;

/// Hex-encoded SHA-256 of the JSON serialisation of `value`.
///
/// Used for configuration fingerprints; struct fields serialise in
/// declaration order so the digest is stable across runs.
pub fn fingerprint<T: serde::Serialize + ?Sized>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value).expect("fingerprinted values serialise");
    hex::encode(Sha256::digest(&bytes))
}
