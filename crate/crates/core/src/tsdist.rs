//! Time-series dissimilarities and the customer distance matrix.

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{FeaturePanel, N_FEATURES};
use crate::Exec;

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("series of length {0} is too short (need at least 2)")]
    TooShort(usize),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("warping band {band} cannot align lengths {n} and {m}")]
    BandTooNarrow { band: usize, n: usize, m: usize },
    #[error("distance matrix needs at least 2 customers, got {0}")]
    TooFewCustomers(usize),
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("malformed distance file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Floor applied to complexity estimates so constant series never divide
/// by zero.
pub const CID_EPSILON: f64 = 1e-12;

/// Default bound on the CID complexity ratio in distance matrices.
pub const DEFAULT_CID_MAX_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Dtw,
    Cid,
    Cort,
    Euclidean,
}

impl Measure {
    pub const ELASTIC: [Measure; 3] = [Measure::Cid, Measure::Cort, Measure::Dtw];

    fn tag(self) -> u8 {
        match self {
            Measure::Dtw => 1,
            Measure::Cid => 2,
            Measure::Cort => 3,
            Measure::Euclidean => 4,
        }
    }

    fn from_tag(tag: u8) -> Option<Measure> {
        [Measure::Dtw, Measure::Cid, Measure::Cort, Measure::Euclidean]
            .into_iter()
            .find(|m| m.tag() == tag)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Dtw => "DTW",
            Measure::Cid => "CID",
            Measure::Cort => "CORT",
            Measure::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dtw" => Ok(Measure::Dtw),
            "cid" => Ok(Measure::Cid),
            "cort" => Ok(Measure::Cort),
            "euclidean" => Ok(Measure::Euclidean),
            other => Err(format!("unknown measure `{other}`")),
        }
    }
}

/// Per-step cost inside DTW.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalCost {
    #[default]
    Absolute,
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceConfig {
    pub dtw_cost: LocalCost,
    /// Sakoe-Chiba half-width; `None` aligns without constraint.
    pub dtw_band: Option<usize>,
    /// CORT tuning constant `k` in `2 / (1 + exp(k * cort))`.
    pub cort_k: f64,
    /// Upper bound on the CID complexity ratio inside distance matrices.
    /// Without it a constant series (CE = 0) against any varying one gets
    /// a ratio near `1 / CID_EPSILON`. `None` applies the bare formula.
    pub cid_max_factor: Option<f64>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            dtw_cost: LocalCost::Absolute,
            dtw_band: None,
            cort_k: 2.0,
            cid_max_factor: Some(DEFAULT_CID_MAX_FACTOR),
            exec: Exec::default(),
        }
    }
}

fn check(x: &[f64]) -> Result<(), DistanceError> {
    if x.len() < 2 {
        return Err(DistanceError::TooShort(x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DistanceError::NonFinite);
    }
    Ok(())
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), DistanceError> {
    check(x)?;
    check(y)?;
    if x.len() != y.len() {
        return Err(DistanceError::LengthMismatch(x.len(), y.len()));
    }
    Ok(())
}

/// Dynamic time warping with steps `(1,0)`, `(0,1)`, `(1,1)` and absolute
/// local cost, no window.
pub fn dtw(x: &[f64], y: &[f64]) -> Result<f64, DistanceError> {
    dtw_with(x, y, LocalCost::Absolute, None)
}

pub fn dtw_with(x: &[f64], y: &[f64], cost: LocalCost, band: Option<usize>) -> Result<f64, DistanceError> {
    check(x)?;
    check(y)?;
    if let Some(b) = band {
        if x.len().abs_diff(y.len()) > b {
            return Err(DistanceError::BandTooNarrow { band: b, n: x.len(), m: y.len() });
        }
    }
    Ok(dtw_kernel(x, y, cost, band))
}

fn dtw_kernel(x: &[f64], y: &[f64], cost: LocalCost, band: Option<usize>) -> f64 {
    let m = y.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        cur[0] = f64::INFINITY;
        let (lo, hi) = match band {
            Some(b) => (i.saturating_sub(b), (i + b + 1).min(m)),
            None => (0, m),
        };
        for j in 0..m {
            if j < lo || j >= hi {
                cur[j + 1] = f64::INFINITY;
                continue;
            }
            let d = xi - y[j];
            let c = match cost {
                LocalCost::Absolute => d.abs(),
                LocalCost::Squared => d * d,
            };
            cur[j + 1] = c + prev[j + 1].min(cur[j]).min(prev[j]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

pub fn euclidean(x: &[f64], y: &[f64]) -> Result<f64, DistanceError> {
    check_pair(x, y)?;
    Ok(euclidean_kernel(x, y))
}

fn euclidean_kernel(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Complexity estimate `sqrt(sum (x[i] - x[i+1])^2)`.
pub fn complexity(x: &[f64]) -> f64 {
    x.windows(2).map(|w| (w[0] - w[1]) * (w[0] - w[1])).sum::<f64>().sqrt()
}

/// Complexity-invariant distance: Euclidean distance scaled by the ratio
/// of the larger to the smaller complexity estimate (each floored at
/// [`CID_EPSILON`], so two constant series get factor 1).
pub fn cid(x: &[f64], y: &[f64]) -> Result<f64, DistanceError> {
    check_pair(x, y)?;
    Ok(cid_kernel(x, y))
}

fn cid_kernel(x: &[f64], y: &[f64]) -> f64 {
    cid_capped_kernel(x, y, None)
}

/// [`cid`] with the complexity ratio clamped to `max_factor`.
pub fn cid_capped(x: &[f64], y: &[f64], max_factor: Option<f64>) -> Result<f64, DistanceError> {
    check_pair(x, y)?;
    Ok(cid_capped_kernel(x, y, max_factor))
}

fn cid_capped_kernel(x: &[f64], y: &[f64], max_factor: Option<f64>) -> f64 {
    let (cx, cy) = (complexity(x), complexity(y));
    let factor = cx.max(cy).max(CID_EPSILON) / cx.min(cy).max(CID_EPSILON);
    factor.min(max_factor.unwrap_or(f64::INFINITY)) * euclidean_kernel(x, y)
}

/// Temporal correlation of first differences, in `[-1, 1]`; 0 when either
/// series has no nonzero increment.
pub fn cort(x: &[f64], y: &[f64]) -> Result<f64, DistanceError> {
    check_pair(x, y)?;
    Ok(cort_kernel(x, y))
}

fn cort_kernel(x: &[f64], y: &[f64]) -> f64 {
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.windows(2).zip(y.windows(2)) {
        let dx = a[1] - a[0];
        let dy = b[1] - b[0];
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// CORT-tuned dissimilarity `2 / (1 + exp(k * CORT)) * d_E`.
pub fn cort_dissim(x: &[f64], y: &[f64], k_tuning: f64) -> Result<f64, DistanceError> {
    check_pair(x, y)?;
    Ok(cort_dissim_kernel(x, y, k_tuning))
}

fn cort_dissim_kernel(x: &[f64], y: &[f64], k: f64) -> f64 {
    2.0 / (1.0 + (k * cort_kernel(x, y)).exp()) * euclidean_kernel(x, y)
}

/// Dissimilarity between two validated, equally long series.
fn kernel(measure: Measure, cfg: &DistanceConfig, x: &[f64], y: &[f64]) -> f64 {
    match measure {
        Measure::Dtw => dtw_kernel(x, y, cfg.dtw_cost, cfg.dtw_band),
        Measure::Cid => cid_capped_kernel(x, y, cfg.cid_max_factor),
        Measure::Cort => cort_dissim_kernel(x, y, cfg.cort_k),
        Measure::Euclidean => euclidean_kernel(x, y),
    }
}

/// Checked single-pair dissimilarity.
pub fn pair_distance(measure: Measure, cfg: &DistanceConfig, x: &[f64], y: &[f64]) -> Result<f64, DistanceError> {
    match measure {
        Measure::Dtw => dtw_with(x, y, cfg.dtw_cost, cfg.dtw_band),
        _ => {
            check_pair(x, y)?;
            Ok(kernel(measure, cfg, x, y))
        }
    }
}

/// Symmetric, zero-diagonal customer dissimilarities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub measure: Measure,
    pub d: Array2<f64>,
    /// Unweighted per-feature matrices, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_feature: Option<Vec<Array2<f64>>>,
}

impl DistanceMatrix {
    /// Wraps a square matrix after checking symmetry, zero diagonal and
    /// non-negativity.
    pub fn new(measure: Measure, d: Array2<f64>) -> Result<Self, DistanceError> {
        let (r, c) = d.dim();
        if r != c {
            return Err(DistanceError::Format(format!("{r}x{c} matrix is not square")));
        }
        for i in 0..r {
            if d[[i, i]] != 0.0 {
                return Err(DistanceError::Format(format!("d[{i}][{i}] = {} is not zero", d[[i, i]])));
            }
            for j in 0..i {
                let v = d[[i, j]];
                if !(v >= 0.0) || v != d[[j, i]] || !v.is_finite() {
                    return Err(DistanceError::Format(format!("entry ({i},{j}) breaks symmetry or sign")));
                }
            }
        }
        Ok(DistanceMatrix { measure, d, per_feature: None })
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[[i, j]]
    }

    /// Entries multiplied by a positive constant.
    pub fn scaled(&self, c: f64) -> DistanceMatrix {
        DistanceMatrix { measure: self.measure, d: &self.d * c, per_feature: None }
    }

    /// Pairwise Euclidean distances between the rows of `points`.
    pub fn euclidean_rows(points: &Array2<f64>) -> DistanceMatrix {
        let n = points.nrows();
        let rows: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
        let d = Array2::from_shape_fn((n, n), |(i, j)| {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if a == b {
                0.0
            } else {
                euclidean_kernel(&rows[a], &rows[b])
            }
        });
        DistanceMatrix { measure: Measure::Euclidean, d, per_feature: None }
    }

    /// Binary layout, little endian: magic `TSDM`, `u16` version 1, `u8`
    /// measure tag, `u8` reserved, `u64` n, 32-byte SHA-256 of the
    /// payload, then `n * n` row-major `f64`.
    pub fn write_binary<W: Write>(&self, mut sink: W) -> Result<(), DistanceError> {
        let n = self.n();
        let mut payload = Vec::with_capacity(n * n * 8);
        for v in self.d.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        sink.write_all(b"TSDM")?;
        sink.write_all(&1u16.to_le_bytes())?;
        sink.write_all(&[self.measure.tag(), 0])?;
        sink.write_all(&(n as u64).to_le_bytes())?;
        sink.write_all(&Sha256::digest(&payload))?;
        sink.write_all(&payload)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut source: R) -> Result<DistanceMatrix, DistanceError> {
        let mut head = [0u8; 16];
        source.read_exact(&mut head)?;
        if &head[0..4] != b"TSDM" {
            return Err(DistanceError::Format("bad magic".into()));
        }
        if u16::from_le_bytes([head[4], head[5]]) != 1 {
            return Err(DistanceError::Format("unsupported version".into()));
        }
        let measure = Measure::from_tag(head[6]).ok_or_else(|| DistanceError::Format("unknown measure tag".into()))?;
        let n = u64::from_le_bytes(head[8..16].try_into().expect("8 bytes")) as usize;
        let mut checksum = [0u8; 32];
        source.read_exact(&mut checksum)?;
        let mut payload = vec![0u8; n.checked_mul(n * 8).ok_or_else(|| DistanceError::Format("size overflow".into()))?];
        source.read_exact(&mut payload)?;
        if Sha256::digest(&payload).as_slice() != checksum {
            return Err(DistanceError::Format("checksum mismatch".into()));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let d = Array2::from_shape_vec((n, n), values).map_err(|e| DistanceError::Format(e.to_string()))?;
        DistanceMatrix::new(measure, d)
    }

    /// Plain text for small matrices: a `# measure=.. n=..` line, then
    /// comma-separated rows.
    pub fn to_text(&self) -> String {
        let mut s = format!("# measure={} n={}\n", self.measure, self.n());
        for row in self.d.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Univariate matrix over one series per customer.
pub fn series_distance_matrix(
    series: &[Vec<f64>],
    measure: Measure,
    cfg: &DistanceConfig,
) -> Result<DistanceMatrix, DistanceError> {
    multivariate_distance(std::slice::from_ref(&series.to_vec()), &[1.0], measure, cfg, false)
}

/// `d[i][j] = sum_f w_f * measure(series[f][i], series[f][j])`.
///
/// Features with zero weight are skipped entirely. Rows are computed in
/// parallel under [`Exec::Parallel`].
pub fn multivariate_distance(
    series: &[Vec<Vec<f64>>],
    weights: &[f64],
    measure: Measure,
    cfg: &DistanceConfig,
    keep_per_feature: bool,
) -> Result<DistanceMatrix, DistanceError> {
    if series.len() != weights.len() {
        return Err(DistanceError::WeightCount { expected: series.len(), got: weights.len() });
    }
    let n = series.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(DistanceError::TooFewCustomers(n));
    }
    let len = series[0][0].len();
    for feature in series {
        for s in feature {
            check(s)?;
            if s.len() != len {
                return Err(DistanceError::LengthMismatch(len, s.len()));
            }
        }
    }
    let active: Vec<usize> = (0..series.len()).filter(|&f| weights[f] != 0.0).collect();
    let mut total = vec![0.0; n * n];
    let mut per_feature = keep_per_feature.then(|| vec![vec![0.0; n * n]; series.len()]);

    if let Some(pf) = per_feature.as_mut() {
        for (f, buf) in pf.iter_mut().enumerate() {
            cfg.exec.for_each_row_mut(buf, n, |i, row| {
                for j in (i + 1)..n {
                    row[j] = kernel(measure, cfg, &series[f][i], &series[f][j]);
                }
            });
            mirror(buf, n);
        }
        for &f in &active {
            for (t, v) in total.iter_mut().zip(&pf[f]) {
                *t += weights[f] * v;
            }
        }
    } else {
        cfg.exec.for_each_row_mut(&mut total, n, |i, row| {
            for j in (i + 1)..n {
                row[j] = active
                    .iter()
                    .map(|&f| weights[f] * kernel(measure, cfg, &series[f][i], &series[f][j]))
                    .sum();
            }
        });
        mirror(&mut total, n);
    }

    Ok(DistanceMatrix {
        measure,
        d: Array2::from_shape_vec((n, n), total).expect("n * n"),
        per_feature: per_feature
            .map(|pf| pf.into_iter().map(|b| Array2::from_shape_vec((n, n), b).expect("n * n")).collect()),
    })
}

fn mirror(buf: &mut [f64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf[j * n + i] = buf[i * n + j];
        }
    }
}

/// Customer distances over the whole panel horizon.
pub fn panel_distance(
    panel: &FeaturePanel,
    weights: &[f64],
    measure: Measure,
    cfg: &DistanceConfig,
) -> Result<DistanceMatrix, DistanceError> {
    panel_distance_window(panel, weights, measure, cfg, 0..panel.n_periods())
}

/// Customer distances restricted to a range of periods.
pub fn panel_distance_window(
    panel: &FeaturePanel,
    weights: &[f64],
    measure: Measure,
    cfg: &DistanceConfig,
    periods: Range<usize>,
) -> Result<DistanceMatrix, DistanceError> {
    if weights.len() != N_FEATURES {
        return Err(DistanceError::WeightCount { expected: N_FEATURES, got: weights.len() });
    }
    if panel.n_customers() < 2 {
        return Err(DistanceError::TooFewCustomers(panel.n_customers()));
    }
    let series = panel.feature_series(periods);
    multivariate_distance(&series, weights, measure, cfg, false)
}
