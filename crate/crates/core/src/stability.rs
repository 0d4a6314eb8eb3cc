//! Per-period re-segmentation and customer-level stability scores.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{self, ClusterError, Linkage, Method, SpectralConfig};
use crate::features::{FeaturePanel, N_FEATURES};
use crate::matching::align_labels;
use crate::tsdist::{self, DistanceConfig, DistanceMatrix, Measure};
use crate::Exec;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("timeline of length {0} is too short (need at least 2)")]
    TooShort(usize),
    #[error("score weights must be non-negative and not all zero")]
    Weights,
    #[error("no period could be segmented: {0}")]
    NoPeriods(String),
    #[error("reference labels cover {got} customers, panel has {expected}")]
    Reference { expected: usize, got: usize },
    #[error(transparent)]
    Distance(#[from] tsdist::DistanceError),
}

/// Trailing window each period is clustered on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum WindowPolicy {
    /// From the first period up to `t`.
    #[default]
    Expanding,
    /// The last `width` periods up to `t`.
    Sliding { width: usize },
}

impl WindowPolicy {
    pub fn range(self, t: usize) -> std::ops::Range<usize> {
        match self {
            WindowPolicy::Expanding => 0..t + 1,
            WindowPolicy::Sliding { width } => (t + 1).saturating_sub(width)..t + 1,
        }
    }
}

/// The clustering model applied at every period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodModel {
    pub method: Method,
    pub measure: Measure,
    pub k: usize,
    #[serde(default)]
    pub linkage: Linkage,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub distance: DistanceConfig,
}

impl PeriodModel {
    /// Labels for a distance matrix, numbered by first occurrence.
    pub fn cluster(&self, d: &DistanceMatrix, exec: Exec) -> Result<Vec<usize>, ClusterError> {
        let n = d.n();
        match self.method {
            Method::Hierarchical => {
                cluster::dendrogram(d, self.linkage).cut(self.k).and_then(|l| {
                    if self.k >= n {
                        Err(ClusterError::KOutOfRange { k: self.k, n, min: 2, max: n.saturating_sub(1) })
                    } else {
                        Ok(l)
                    }
                })
            }
            Method::Spectral => {
                let emb = cluster::SpectralEmbedding::new(d, self.spectral.sigma)?;
                let rows = emb.rows(self.k);
                let fit = cluster::kmeans(&rows, self.k, &self.spectral.kmeans, exec)?;
                Ok(crate::metrics::canonical_labels(&fit.labels))
            }
            Method::Kmeans => Err(ClusterError::Numerical("k-means is not a distance-matrix method".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTimeline {
    pub customer_id: String,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodOutcome {
    pub period: u32,
    pub window: (usize, usize),
    pub computed: bool,
    /// Why the period was skipped; its labels are carried forward (or
    /// back-filled from the first computed period).
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timelines {
    pub periods: Vec<u32>,
    pub k: usize,
    pub timelines: Vec<LabelTimeline>,
    pub outcomes: Vec<PeriodOutcome>,
}

impl Timelines {
    pub fn label_rows(&self) -> Vec<&[usize]> {
        self.timelines.iter().map(|t| t.labels.as_slice()).collect()
    }
}

/// Clusters every period's trailing window with `model`, then renames
/// segment ids so they stay comparable over time: the first computed
/// period is matched to `reference` (when given), each later one to its
/// predecessor, by maximum overlap.
pub fn per_period_segmentation(
    panel: &FeaturePanel,
    weights: &[f64; N_FEATURES],
    model: &PeriodModel,
    window: WindowPolicy,
    reference: Option<&[usize]>,
    exec: Exec,
) -> Result<Timelines, StabilityError> {
    let n = panel.n_customers();
    let t_len = panel.n_periods();
    if let Some(r) = reference {
        if r.len() != n {
            return Err(StabilityError::Reference { expected: n, got: r.len() });
        }
    }
    let mut dist_cfg = model.distance;
    dist_cfg.exec = exec;

    let raw: Vec<Result<Vec<usize>, String>> = exec.map_range(t_len, |t| {
        let range = window.range(t);
        if range.len() < 2 {
            return Err("window shorter than 2 periods".to_string());
        }
        let active = (0..n).filter(|&c| panel.is_active(c, range.clone())).count();
        if active < model.k {
            return Err(format!("{active} active customers, fewer than k = {}", model.k));
        }
        let d = tsdist::panel_distance_window(panel, weights, model.measure, &dist_cfg, range).map_err(|e| e.to_string())?;
        model.cluster(&d, exec).map_err(|e| e.to_string())
    });

    let mut outcomes = Vec::with_capacity(t_len);
    let mut columns: Vec<Option<Vec<usize>>> = Vec::with_capacity(t_len);
    let mut prev: Option<Vec<usize>> = None;
    for (t, res) in raw.into_iter().enumerate() {
        let range = window.range(t);
        let mut outcome = PeriodOutcome { period: panel.periods[t], window: (range.start, range.end), computed: false, note: None };
        match res {
            Ok(labels) => {
                let aligned = match (&prev, reference) {
                    (Some(p), _) => align_labels(p, &labels),
                    (None, Some(r)) => align_labels(r, &labels),
                    (None, None) => labels,
                };
                outcome.computed = true;
                prev = Some(aligned.clone());
                columns.push(Some(aligned));
            }
            Err(note) => {
                log::info!("period {} skipped: {note}", panel.periods[t]);
                outcome.note = Some(note);
                columns.push(prev.clone());
            }
        }
        outcomes.push(outcome);
    }
    let Some(first) = columns.iter().flatten().next().cloned() else {
        let note = outcomes.iter().find_map(|o| o.note.clone()).unwrap_or_else(|| "empty panel".into());
        return Err(StabilityError::NoPeriods(note));
    };
    let columns: Vec<Vec<usize>> = columns.into_iter().map(|c| c.unwrap_or_else(|| first.clone())).collect();
    let timelines = (0..n)
        .map(|c| LabelTimeline { customer_id: panel.customers[c].clone(), labels: columns.iter().map(|col| col[c]).collect() })
        .collect::<Vec<_>>();
    let k = columns.iter().flatten().max().map_or(0, |m| m + 1).max(model.k);
    Ok(Timelines { periods: panel.periods.clone(), k, timelines, outcomes })
}

/// Consecutive label changes divided by `T - 1`.
pub fn volatility(labels: &[usize]) -> Result<f64, StabilityError> {
    if labels.len() < 2 {
        return Err(StabilityError::TooShort(labels.len()));
    }
    let changes = labels.windows(2).filter(|w| w[0] != w[1]).count();
    Ok(changes as f64 / (labels.len() - 1) as f64)
}

/// Mean run length of identical consecutive labels divided by `T`,
/// which is `1 / runs`.
pub fn continuity(labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let runs = 1 + labels.windows(2).filter(|w| w[0] != w[1]).count();
    let mean_run = labels.len() as f64 / runs as f64;
    mean_run / labels.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub k: usize,
    /// Row-stochastic transition probabilities.
    pub t: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
    /// Rows without outgoing transitions, set to uniform.
    pub uniform_rows: Vec<usize>,
}

/// Pools consecutive-period transitions over every timeline and
/// normalises each row.
pub fn transition_model<L: AsRef<[usize]>>(timelines: &[L], k: usize) -> TransitionMatrix {
    let k = timelines
        .iter()
        .flat_map(|t| t.as_ref().iter().copied())
        .max()
        .map_or(k, |m| k.max(m + 1));
    let mut counts = vec![vec![0u64; k]; k];
    for tl in timelines {
        for w in tl.as_ref().windows(2) {
            counts[w[0]][w[1]] += 1;
        }
    }
    let mut uniform_rows = Vec::new();
    let t = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                uniform_rows.push(i);
                vec![1.0 / k as f64; k]
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    TransitionMatrix { k, t, counts, uniform_rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights { alpha: 1.0 / 3.0, beta: 1.0 / 3.0, gamma: 1.0 / 3.0 }
    }
}

impl ScoreWeights {
    pub fn normalized(self) -> Result<ScoreWeights, StabilityError> {
        let ScoreWeights { alpha, beta, gamma } = self;
        if [alpha, beta, gamma].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(StabilityError::Weights);
        }
        let s = alpha + beta + gamma;
        if s == 0.0 {
            return Err(StabilityError::Weights);
        }
        Ok(ScoreWeights { alpha: alpha / s, beta: beta / s, gamma: gamma / s })
    }
}

/// How the "transitions" term of the segment score is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionsTerm {
    /// Mean pooled-model probability of each observed step.
    #[default]
    PathLikelihood,
    /// One over the number of distinct segments visited.
    DistinctSegments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityProfile {
    pub customer_id: String,
    pub volatility: f64,
    pub continuity: f64,
    pub transition_likelihood: f64,
    pub segment_score: f64,
    pub stable_label: usize,
}

/// Most frequent label; among equally frequent labels the one seen last.
pub fn stable_label(labels: &[usize]) -> usize {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut count = vec![0usize; k];
    let mut last = vec![0usize; k];
    for (t, &l) in labels.iter().enumerate() {
        count[l] += 1;
        last[l] = t;
    }
    (0..k).filter(|&l| count[l] > 0).max_by_key(|&l| (count[l], last[l])).unwrap_or(0)
}

pub fn segment_score(
    timeline: &LabelTimeline,
    tm: &TransitionMatrix,
    weights: ScoreWeights,
    term: TransitionsTerm,
) -> Result<StabilityProfile, StabilityError> {
    let w = weights.normalized()?;
    let labels = &timeline.labels;
    let vol = volatility(labels)?;
    let cont = continuity(labels);
    let trans = match term {
        TransitionsTerm::PathLikelihood => {
            labels.windows(2).map(|p| tm.t[p[0]][p[1]]).sum::<f64>() / (labels.len() - 1) as f64
        }
        TransitionsTerm::DistinctSegments => {
            let mut seen = labels.clone();
            seen.sort_unstable();
            seen.dedup();
            1.0 / seen.len() as f64
        }
    };
    Ok(StabilityProfile {
        customer_id: timeline.customer_id.clone(),
        volatility: vol,
        continuity: cont,
        transition_likelihood: trans,
        segment_score: w.alpha * cont + w.beta * (1.0 - vol) + w.gamma * trans,
        stable_label: stable_label(labels),
    })
}

pub fn profiles(
    timelines: &Timelines,
    tm: &TransitionMatrix,
    weights: ScoreWeights,
    term: TransitionsTerm,
    exec: Exec,
) -> Result<Vec<StabilityProfile>, StabilityError> {
    exec.map_slice(&timelines.timelines, |tl| segment_score(tl, tm, weights, term)).into_iter().collect()
}

/// `customer_id,p_<period>...,volatility,continuity,transitions,score,stable_label`.
pub fn timeline_table(timelines: &Timelines, profiles: &[StabilityProfile]) -> String {
    let mut s = String::from("customer_id");
    for p in &timelines.periods {
        let _ = write!(s, ",p_{p}");
    }
    s.push_str(",volatility,continuity,transitions,score,stable_label\n");
    for (tl, pr) in timelines.timelines.iter().zip(profiles) {
        s.push_str(&tl.customer_id);
        for l in &tl.labels {
            let _ = write!(s, ",{l}");
        }
        let _ = writeln!(
            s,
            ",{:.6},{:.6},{:.6},{:.6},{}",
            pr.volatility, pr.continuity, pr.transition_likelihood, pr.segment_score, pr.stable_label
        );
    }
    s
}
