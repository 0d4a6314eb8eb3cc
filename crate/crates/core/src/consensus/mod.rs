//! Fusion of the time-series and stability partitions: a weighted
//! label-agreement graph, Leiden communities, reconciliation to the target
//! segment count and re-allocation reports.

mod graph;
mod leiden;
mod reconcile;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::align_labels;
use crate::Exec;

pub use graph::{agreement_quotient, build_agreement_graph, AgreementGraph, Graph, TwinQuotient};
pub use leiden::{leiden, Communities, LeidenConfig};
pub use reconcile::{merge_to_k, reconcile_to_k};
pub use report::{pct_change_csv, pct_changes, Contingency, PctChange};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConsensusError {
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("agreement weights must be non-negative and sum to 1 (w_t = {w_t}, w_s = {w_s})")]
    Weights { w_t: f64, w_s: f64 },
    #[error("graph has no edge weight")]
    Degenerate,
    #[error("could not reach {target} segments; best was {achieved}")]
    Reconcile { target: usize, achieved: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusConfig {
    pub w_t: f64,
    pub w_s: f64,
    pub leiden: LeidenConfig,
    /// Segment count of the final partition; defaults to the number of
    /// time-series segments.
    pub target_k: Option<usize>,
    pub max_doublings: usize,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig { w_t: 0.6, w_s: 0.4, leiden: LeidenConfig::default(), target_k: None, max_doublings: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusPartition {
    pub final_labels: Vec<usize>,
    pub k: usize,
    /// Modularity of the final labels on the agreement graph, at the
    /// configured resolution.
    pub modularity: f64,
    pub communities_found: usize,
    pub resolution_used: f64,
    pub edges: usize,
    pub contingency_vs_t: Contingency,
    pub contingency_vs_s: Contingency,
    pub pct_change_t: Vec<PctChange>,
    pub pct_change_s: Vec<PctChange>,
}

/// Full consensus: agreement graph, Leiden, reconciliation to `target_k`,
/// alignment to `labels_t` and the contingency report. `labels_s` is first
/// aligned to `labels_t` so same-numbered segments are comparable.
///
/// Leiden runs on the twin quotient when it is exact at every resolution
/// used, and on the full agreement graph otherwise.
pub fn consensus(
    labels_t: &[usize],
    labels_s: &[usize],
    cfg: &ConsensusConfig,
    exec: Exec,
) -> Result<ConsensusPartition, ConsensusError> {
    if labels_t.len() != labels_s.len() {
        return Err(ConsensusError::LengthMismatch(labels_t.len(), labels_s.len()));
    }
    let labels_s = align_labels(labels_t, labels_s);
    let target = cfg.target_k.unwrap_or_else(|| labels_t.iter().max().map_or(0, |m| m + 1));
    let q = agreement_quotient(labels_t, &labels_s, cfg.w_t, cfg.w_s)?;
    if q.exact_at(cfg.leiden.resolution) {
        let communities = leiden(&q.graph, &cfg.leiden)?;
        // too few label pairs for the target fall through to the full graph
        if let Ok((labels, resolution_used)) = reconcile_to_k(&q.graph, &communities, target, &cfg.leiden, cfg.max_doublings) {
            if q.exact_at(resolution_used) {
                let modularity = q.graph.modularity(&labels, cfg.leiden.resolution);
                let final_labels = align_labels(labels_t, &q.expand(&labels));
                let found = communities.count;
                return Ok(consensus_report(final_labels, modularity, q.full_edges, labels_t, &labels_s, found, resolution_used));
            }
        }
    }
    let ag = build_agreement_graph(labels_t, &labels_s, cfg.w_t, cfg.w_s, exec)?;
    let communities = leiden(&ag.graph, &cfg.leiden)?;
    let (labels, resolution_used) = reconcile_to_k(&ag.graph, &communities, target, &cfg.leiden, cfg.max_doublings)?;
    let modularity = ag.graph.modularity(&labels, cfg.leiden.resolution);
    let final_labels = align_labels(labels_t, &labels);
    Ok(consensus_report(final_labels, modularity, ag.graph.edge_count(), labels_t, &labels_s, communities.count, resolution_used))
}

/// Contingency and percent-change tables of `final_labels` against both
/// sources.
pub fn consensus_report(
    final_labels: Vec<usize>,
    modularity: f64,
    edges: usize,
    labels_t: &[usize],
    labels_s: &[usize],
    communities_found: usize,
    resolution_used: f64,
) -> ConsensusPartition {
    ConsensusPartition {
        k: final_labels.iter().max().map_or(0, |m| m + 1),
        modularity,
        communities_found,
        resolution_used,
        edges,
        contingency_vs_t: Contingency::new(&final_labels, labels_t),
        contingency_vs_s: Contingency::new(&final_labels, labels_s),
        pct_change_t: pct_changes(&final_labels, labels_t),
        pct_change_s: pct_changes(&final_labels, labels_s),
        final_labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::adjusted_rand_index;

    #[test]
    fn time_series_weight_one_reproduces_it() {
        let t = [0, 0, 1, 1, 2, 2, 3, 3, 0, 1];
        let s = [1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        let cfg = ConsensusConfig { w_t: 1.0, w_s: 0.0, ..Default::default() };
        let c = consensus(&t, &s, &cfg, Exec::Sequential).unwrap();
        assert_eq!(adjusted_rand_index(&c.final_labels, &t), 1.0);
        assert_eq!(c.final_labels, t.to_vec());
        assert!(c.pct_change_t.iter().all(|p| p.pct_of_final == 0.0));
    }

    #[test]
    fn identical_inputs_survive_any_weights() {
        let t = [0, 0, 0, 1, 1, 2, 2, 2, 2, 3, 3, 3];
        let s: Vec<usize> = t.iter().map(|l| (l + 2) % 4).collect();
        for w_t in [0.0, 0.3, 0.6, 1.0] {
            let cfg = ConsensusConfig { w_t, w_s: 1.0 - w_t, ..Default::default() };
            let c = consensus(&t, &s, &cfg, Exec::Sequential).unwrap();
            assert_eq!(adjusted_rand_index(&c.final_labels, &t), 1.0, "w_t = {w_t}");
        }
    }

    #[test]
    fn totals_match_sizes() {
        let t = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2];
        let s = [0, 0, 1, 1, 1, 2, 2, 2, 0, 2];
        let c = consensus(&t, &s, &ConsensusConfig::default(), Exec::Sequential).unwrap();
        let mut sizes = vec![0u64; c.k];
        for &l in &c.final_labels {
            sizes[l] += 1;
        }
        assert_eq!(c.contingency_vs_t.row_totals(), sizes);
        assert_eq!(c.contingency_vs_s.row_totals(), sizes);
        assert_eq!(c.contingency_vs_t.column_totals().iter().sum::<u64>(), 10);
        assert!(c.pct_change_t.iter().all(|p| (0.0..=100.0).contains(&p.pct_of_final)));
    }
}
