use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    dendrogram, spectral_from_embedding, ClusterError, Linkage, Method, SegmentationResult, SpectralConfig,
    SpectralEmbedding,
};
use crate::tsdist::{DistanceMatrix, Measure};
use crate::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub methods: Vec<Method>,
    pub k_range: Vec<usize>,
    pub linkage: Linkage,
    pub spectral: SpectralConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            methods: vec![Method::Hierarchical, Method::Spectral],
            k_range: vec![4, 5, 6],
            linkage: Linkage::Average,
            spectral: SpectralConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub method: Method,
    pub measure: Measure,
    pub k: usize,
}

/// One evaluated cell; a failed cell carries `error` and no scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub method: Method,
    pub measure: Measure,
    pub k: usize,
    pub silhouette: Option<f64>,
    pub calinski_harabasz: Option<f64>,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<SegmentationResult>,
}

impl GridRow {
    pub fn cell(&self) -> GridCell {
        GridCell { method: self.method, measure: self.measure, k: self.k }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub rows: Vec<GridRow>,
    pub best_by_silhouette: GridCell,
    /// `None` when no cell has a defined Calinski-Harabasz index.
    pub best_by_ch: Option<GridCell>,
}

impl GridSearchReport {
    pub fn row(&self, cell: GridCell) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.cell() == cell)
    }

    /// The partition of the silhouette winner.
    pub fn best(&self) -> &SegmentationResult {
        self.row(self.best_by_silhouette)
            .and_then(|r| r.result.as_ref())
            .expect("best row has a result")
    }

    /// Long form: `method,measure,k,silhouette,calinski_harabasz,error`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,measure,k,silhouette,calinski_harabasz,error\n");
        for r in &self.rows {
            let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method,
                r.measure,
                r.k,
                fmt(r.silhouette),
                fmt(r.calinski_harabasz),
                r.error.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        s
    }

    /// One line per method and measure, SI columns then CH columns per k.
    pub fn to_table(&self) -> String {
        let mut ks: Vec<usize> = self.rows.iter().map(|r| r.k).collect();
        ks.sort_unstable();
        ks.dedup();
        let mut groups: Vec<(Method, Measure)> = Vec::new();
        let mut by_cell = BTreeMap::new();
        for r in &self.rows {
            if !groups.contains(&(r.method, r.measure)) {
                groups.push((r.method, r.measure));
            }
            by_cell.insert((r.method, r.measure, r.k), r);
        }
        let mut s = String::from("method,measure");
        for k in &ks {
            let _ = write!(s, ",SI_k{k}");
        }
        for k in &ks {
            let _ = write!(s, ",CH_k{k}");
        }
        s.push('\n');
        for (m, d) in groups {
            let _ = write!(s, "{m},{d}");
            for k in &ks {
                let v = by_cell.get(&(m, d, *k)).and_then(|r| r.silhouette);
                let _ = write!(s, ",{}", v.map_or("NA".into(), |x| format!("{x:.4}")));
            }
            for k in &ks {
                let v = by_cell.get(&(m, d, *k)).and_then(|r| r.calinski_harabasz);
                let _ = write!(s, ",{}", v.map_or("NA".into(), |x| format!("{x:.2}")));
            }
            s.push('\n');
        }
        s
    }
}

enum Prepared {
    Tree(super::Dendrogram),
    Embedding(SpectralEmbedding),
    Failed(String),
}

/// Evaluates every method × measure × k cell, each scored on the matrix
/// of its own measure. Rows are ordered by method, then by the order of
/// `matrices`, then by k. Dendrograms and embeddings are built once per
/// measure.
pub fn grid_search(matrices: &[DistanceMatrix], cfg: &GridConfig, exec: Exec) -> Result<GridSearchReport, ClusterError> {
    let jobs: Vec<(Method, usize)> =
        cfg.methods.iter().flat_map(|&m| (0..matrices.len()).map(move |i| (m, i))).collect();
    let prepared = exec.map_slice(&jobs, |&(method, i)| {
        let d = &matrices[i];
        match method {
            Method::Hierarchical => Prepared::Tree(dendrogram(d, cfg.linkage)),
            Method::Spectral => match SpectralEmbedding::new(d, cfg.spectral.sigma) {
                Ok(e) => Prepared::Embedding(e),
                Err(e) => Prepared::Failed(e.to_string()),
            },
            Method::Kmeans => Prepared::Failed("k-means needs feature vectors, not a distance matrix".into()),
        }
    });

    let cells: Vec<(usize, usize)> =
        (0..jobs.len()).flat_map(|j| cfg.k_range.iter().map(move |&k| (j, k))).collect();
    let rows = exec.map_slice(&cells, |&(j, k)| {
        let (method, i) = jobs[j];
        let d = &matrices[i];
        let outcome = match &prepared[j] {
            Prepared::Tree(t) => super::check_k(k, d.n(), 2, d.n().saturating_sub(1))
                .and_then(|_| t.cut(k))
                .and_then(|labels| {
                    SegmentationResult::evaluate(
                        d,
                        &labels,
                        Method::Hierarchical,
                        crate::fingerprint(&(Method::Hierarchical, d.measure, k, cfg.linkage)),
                    )
                })
                .map_err(|e| e.to_string()),
            Prepared::Embedding(e) => spectral_from_embedding(d, e, k, &cfg.spectral, Exec::Sequential).map_err(|e| e.to_string()),
            Prepared::Failed(msg) => Err(msg.clone()),
        };
        match outcome {
            Ok(r) => GridRow {
                method,
                measure: d.measure,
                k,
                silhouette: Some(r.silhouette),
                calinski_harabasz: r.calinski_harabasz,
                error: None,
                result: Some(r),
            },
            Err(e) => GridRow { method, measure: d.measure, k, silhouette: None, calinski_harabasz: None, error: Some(e), result: None },
        }
    });

    let argmax = |score: fn(&GridRow) -> Option<f64>| {
        rows.iter()
            .filter_map(|r| score(r).map(|v| (r.cell(), v)))
            .fold(None, |best: Option<(GridCell, f64)>, (c, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((c, v)),
            })
            .map(|(c, _)| c)
    };
    let best_by_ch = argmax(|r| r.calinski_harabasz);
    let Some(best_by_silhouette) = argmax(|r| r.silhouette) else {
        let first = rows.iter().find_map(|r| r.error.clone()).unwrap_or_else(|| "empty grid".into());
        return Err(ClusterError::AllFailed(first));
    };
    Ok(GridSearchReport { rows, best_by_silhouette, best_by_ch })
}
