//! Summary tables of a finished run: the grid report, re-allocation and
//! contingency tables, per-segment feature means, snake-plot series and
//! baseline comparisons.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use tempseg_core::cluster::{
    self, kmeans_baseline, ClusterError, FeatureSubset, GridConfig, GridSearchReport, Method, SegmentationResult, Weighting,
};
use tempseg_core::consensus::{pct_change_csv, ConsensusPartition};
use tempseg_core::features::{feature_names, scale_columns, FeaturePanel, ScalingMethod, N_FEATURES};
use tempseg_core::tsdist::{self, DistanceConfig, DistanceMatrix, Measure};
use tempseg_core::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeans {
    pub segment: usize,
    pub size: usize,
    /// Raw aggregate feature means in panel feature order.
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnakePlot {
    pub features: Vec<String>,
    /// One line per segment: the mean z-scored aggregate value of every
    /// feature.
    pub series: Vec<SegmentMeans>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub model: String,
    pub method: Method,
    pub measure: Measure,
    pub features: String,
    pub weighting: String,
    pub k: usize,
    pub silhouette: Option<f64>,
    pub calinski_harabasz: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub grid_table: String,
    pub reallocation: String,
    pub contingency_t: String,
    pub contingency_s: String,
    pub segment_means: Vec<SegmentMeans>,
    pub snake: SnakePlot,
    pub baselines: Vec<BaselineRow>,
}

/// Segments the weighted panel with one method on one measure.
pub fn weighted_segmentation(
    panel: &FeaturePanel,
    weights: &[f64; N_FEATURES],
    method: Method,
    measure: Measure,
    k: usize,
    grid: &GridConfig,
    distance: &DistanceConfig,
    exec: Exec,
) -> anyhow::Result<SegmentationResult> {
    let cfg = DistanceConfig { exec, ..*distance };
    let d = tsdist::panel_distance(panel, weights, measure, &cfg)?;
    Ok(segment_matrix(&d, method, k, grid, exec)?)
}

pub fn segment_matrix(
    d: &DistanceMatrix,
    method: Method,
    k: usize,
    grid: &GridConfig,
    exec: Exec,
) -> Result<SegmentationResult, ClusterError> {
    match method {
        Method::Hierarchical => cluster::agglomerative(d, k, grid.linkage),
        Method::Spectral => cluster::spectral(d, k, &grid.spectral, exec),
        Method::Kmeans => Err(ClusterError::Numerical("k-means needs feature vectors, not a distance matrix".into())),
    }
}

fn group_means(matrix: &Array2<f64>, labels: &[usize], k: usize) -> Vec<SegmentMeans> {
    let mut out: Vec<SegmentMeans> =
        (0..k).map(|segment| SegmentMeans { segment, size: 0, means: vec![0.0; matrix.ncols()] }).collect();
    for (row, &l) in matrix.rows().into_iter().zip(labels) {
        out[l].size += 1;
        for (m, v) in out[l].means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for s in &mut out {
        if s.size > 0 {
            s.means.iter_mut().for_each(|m| *m /= s.size as f64);
        }
    }
    out
}

pub fn segment_means(panel: &FeaturePanel, labels: &[usize], k: usize) -> Vec<SegmentMeans> {
    group_means(&panel.aggregate_matrix(), labels, k)
}

pub fn snake_plot(panel: &FeaturePanel, labels: &[usize], k: usize) -> SnakePlot {
    let (scaled, _) = scale_columns(panel.aggregate_matrix().view(), ScalingMethod::Zscore);
    SnakePlot { features: feature_names(), series: group_means(&scaled, labels, k) }
}

fn means_csv(rows: &[SegmentMeans]) -> String {
    let mut s = String::from("segment,size");
    for f in feature_names() {
        let _ = write!(s, ",{f}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{}", r.segment, r.size);
        for m in &r.means {
            let _ = write!(s, ",{m:.4}");
        }
        s.push('\n');
    }
    s
}

/// Long form `segment,feature,value` for plotting tools.
pub fn snake_csv(snake: &SnakePlot) -> String {
    let mut s = String::from("segment,feature,value\n");
    for r in &snake.series {
        for (f, v) in snake.features.iter().zip(&r.means) {
            let _ = writeln!(s, "{},{f},{v:.6}", r.segment);
        }
    }
    s
}

pub fn baselines_csv(rows: &[BaselineRow]) -> String {
    let mut s = String::from("model,method,measure,features,weighting,k,silhouette,calinski_harabasz,error\n");
    for r in rows {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.model,
            r.method,
            r.measure,
            r.features,
            r.weighting,
            r.k,
            fmt(r.silhouette),
            fmt(r.calinski_harabasz),
            r.error.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    s
}

fn baseline_row(model: &str, features: &str, weighting: &str, k: usize, method: Method, measure: Measure, r: anyhow::Result<SegmentationResult>) -> BaselineRow {
    let (silhouette, calinski_harabasz, error) = match r {
        Ok(s) => (Some(s.silhouette), s.calinski_harabasz, None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    BaselineRow {
        model: model.into(),
        method,
        measure,
        features: features.into(),
        weighting: weighting.into(),
        k,
        silhouette,
        calinski_harabasz,
        error,
    }
}

/// The selected model against RFM-only and equal-weight variants of it,
/// and against k-means on the aggregate vectors.
pub fn baselines(
    panel: &FeaturePanel,
    ahp: &[f64; N_FEATURES],
    grid: &GridSearchReport,
    grid_cfg: &GridConfig,
    distance: &DistanceConfig,
    exec: Exec,
) -> Vec<BaselineRow> {
    let best = grid.best();
    let (method, measure, k) = (best.method, best.measure, best.k);
    let mut rows = vec![baseline_row("adaptive MCDM", "all", "ahp", k, method, measure, Ok(best.clone()))];
    for (model, subset, weighting, label_f, label_w) in [
        ("fixed MCDM", FeatureSubset::All, Weighting::FixedEqual, "all", "fixed_equal"),
        ("RFM", FeatureSubset::Rfm, Weighting::FixedEqual, "rfm", "equal"),
    ] {
        let w = cluster::baseline_weights(subset, weighting, ahp);
        let r = weighted_segmentation(panel, &w, method, measure, k, grid_cfg, distance, exec);
        rows.push(baseline_row(model, label_f, label_w, k, method, measure, r));
    }
    let (agg, _) = scale_columns(panel.aggregate_matrix().view(), ScalingMethod::Zscore);
    let km = grid_cfg.spectral.kmeans;
    for (subset, weighting, label_f, label_w) in [
        (FeatureSubset::Rfm, Weighting::None, "rfm", "none"),
        (FeatureSubset::All, Weighting::FixedEqual, "all", "fixed_equal"),
        (FeatureSubset::All, Weighting::Ahp, "all", "ahp"),
    ] {
        let r = kmeans_baseline(&agg, k, subset, weighting, ahp, &km, exec).map_err(anyhow::Error::from);
        rows.push(baseline_row("K-Means", label_f, label_w, k, Method::Kmeans, Measure::Euclidean, r));
    }
    rows
}

#[allow(clippy::too_many_arguments)]
pub fn build_report(
    panel: &FeaturePanel,
    ahp: &[f64; N_FEATURES],
    grid: &GridSearchReport,
    consensus: &ConsensusPartition,
    grid_cfg: &GridConfig,
    distance: &DistanceConfig,
    exec: Exec,
) -> Report {
    let labels = &consensus.final_labels;
    Report {
        grid_table: grid.to_table(),
        reallocation: pct_change_csv(&consensus.pct_change_t, &consensus.pct_change_s),
        contingency_t: consensus.contingency_vs_t.to_csv("time_series"),
        contingency_s: consensus.contingency_vs_s.to_csv("stability"),
        segment_means: segment_means(panel, labels, consensus.k),
        snake: snake_plot(panel, labels, consensus.k),
        baselines: baselines(panel, ahp, grid, grid_cfg, distance, exec),
    }
}

impl Report {
    /// `(file name, contents)` of every table.
    pub fn files(&self) -> Vec<(String, String)> {
        vec![
            ("grid_table.csv".into(), self.grid_table.clone()),
            ("reallocation.csv".into(), self.reallocation.clone()),
            ("contingency_t.csv".into(), self.contingency_t.clone()),
            ("contingency_s.csv".into(), self.contingency_s.clone()),
            ("segment_means.csv".into(), means_csv(&self.segment_means)),
            ("snake.csv".into(), snake_csv(&self.snake)),
            ("baselines.csv".into(), baselines_csv(&self.baselines)),
        ]
    }
}
