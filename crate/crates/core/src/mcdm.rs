//! Analytic Hierarchy Process: pairwise judgments, principal-eigenvector
//! weights, consistency gating and two-level hierarchical composition.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Feature, FeaturePanel, N_FEATURES};

#[derive(Debug, Error, PartialEq)]
pub enum McdmError {
    #[error("pairwise matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("pairwise matrix has {got} criteria names for {m} rows")]
    NameCount { m: usize, got: usize },
    #[error("diagonal entry a[{i}][{i}] = {value} is not 1")]
    Diagonal { i: usize, value: f64 },
    #[error("entry a[{i}][{j}] = {value} is outside [1/9, 9]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("a[{i}][{j}] * a[{j}][{i}] = {product}, expected 1")]
    NotReciprocal { i: usize, j: usize, product: f64 },
    #[error("random index is tabulated only up to 10 criteria, got {0}")]
    TooManyCriteria(usize),
    #[error("power iteration did not converge after {0} steps")]
    NoConvergence(usize),
    #[error("{matrix} is inconsistent: consistency ratio {cr:.4} exceeds 0.1; adjust the judgments")]
    Inconsistent { matrix: String, cr: f64 },
    #[error("criteria mismatch: {0}")]
    CriteriaMismatch(String),
    #[error("malformed matrix text: {0}")]
    Parse(String),
}

/// Saaty's random consistency index for matrices of order 1..=10.
pub const RANDOM_INDEX: [f64; 10] = [0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49];

pub const CONSISTENCY_THRESHOLD: f64 = 0.1;

const RECIPROCITY_TOL: f64 = 1e-9;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    #[serde(rename = "RFM")]
    Rfm,
    Growth,
    Stability,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Rfm, Dimension::Growth, Dimension::Stability];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Rfm => "RFM",
            Dimension::Growth => "Growth",
            Dimension::Stability => "Stability",
        }
    }

    pub fn of(feature: Feature) -> Dimension {
        match feature {
            Feature::Recency | Feature::Frequency | Feature::Sales => Dimension::Rfm,
            Feature::ProductMix | Feature::Volume | Feature::AvgProfit | Feature::LtmFrequency => Dimension::Growth,
            Feature::Loyalty | Feature::AvgVolume | Feature::ProfitMargin => Dimension::Stability,
        }
    }

    /// The panel criteria in this dimension, in panel order.
    pub fn features(self) -> Vec<Feature> {
        Feature::ALL.into_iter().filter(|f| Dimension::of(*f) == self).collect()
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered criteria with their dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaSet {
    pub criteria: Vec<String>,
    pub dimension_of: BTreeMap<String, Dimension>,
}

impl CriteriaSet {
    pub fn new(pairs: Vec<(String, Dimension)>) -> Result<Self, McdmError> {
        let mut dimension_of = BTreeMap::new();
        let mut criteria = Vec::new();
        for (name, dim) in pairs {
            if dimension_of.insert(name.clone(), dim).is_some() {
                return Err(McdmError::CriteriaMismatch(format!("duplicate criterion `{name}`")));
            }
            criteria.push(name);
        }
        Ok(CriteriaSet { criteria, dimension_of })
    }

    /// The ten panel features grouped into RFM, Growth and Stability.
    pub fn panel() -> Self {
        CriteriaSet::new(Feature::ALL.iter().map(|f| (f.name().to_string(), Dimension::of(*f))).collect())
            .expect("feature names are unique")
    }

    pub fn in_dimension(&self, dim: Dimension) -> Vec<String> {
        self.criteria.iter().filter(|c| self.dimension_of[*c] == dim).cloned().collect()
    }
}

/// A validated reciprocal judgment matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PairwiseMatrixRepr", into = "PairwiseMatrixRepr")]
pub struct PairwiseMatrix {
    names: Vec<String>,
    a: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct PairwiseMatrixRepr {
    criteria: Vec<String>,
    matrix: Vec<Vec<f64>>,
}

impl TryFrom<PairwiseMatrixRepr> for PairwiseMatrix {
    type Error = McdmError;

    fn try_from(r: PairwiseMatrixRepr) -> Result<Self, McdmError> {
        PairwiseMatrix::from_rows(r.criteria, &r.matrix)
    }
}

impl From<PairwiseMatrix> for PairwiseMatrixRepr {
    fn from(p: PairwiseMatrix) -> Self {
        PairwiseMatrixRepr { matrix: p.a.rows().into_iter().map(|r| r.to_vec()).collect(), criteria: p.names }
    }
}

impl PairwiseMatrix {
    pub fn new(names: Vec<String>, a: Array2<f64>) -> Result<Self, McdmError> {
        let (rows, cols) = a.dim();
        if rows != cols {
            return Err(McdmError::NotSquare { rows, cols });
        }
        if names.len() != rows {
            return Err(McdmError::NameCount { m: rows, got: names.len() });
        }
        for i in 0..rows {
            if (a[[i, i]] - 1.0).abs() > RECIPROCITY_TOL {
                return Err(McdmError::Diagonal { i, value: a[[i, i]] });
            }
            for j in 0..rows {
                let v = a[[i, j]];
                if !v.is_finite() || v < 1.0 / 9.0 - RECIPROCITY_TOL || v > 9.0 + RECIPROCITY_TOL {
                    return Err(McdmError::OutOfRange { i, j, value: v });
                }
                let product = v * a[[j, i]];
                if (product - 1.0).abs() > RECIPROCITY_TOL {
                    return Err(McdmError::NotReciprocal { i, j, product });
                }
            }
        }
        Ok(PairwiseMatrix { names, a })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, McdmError> {
        let m = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(McdmError::NotSquare { rows: m, cols: bad.len() });
        }
        let a = Array2::from_shape_fn((m, m), |(i, j)| rows[i][j]);
        PairwiseMatrix::new(names, a)
    }

    /// Builds a matrix from upper-triangle judgments, filling reciprocals.
    /// `upper[i]` holds `a[i][i+1..]`.
    pub fn from_upper(names: Vec<String>, upper: &[Vec<f64>]) -> Result<Self, McdmError> {
        let m = names.len();
        let mut a = Array2::ones((m, m));
        for i in 0..m {
            let row = upper.get(i).map(Vec::as_slice).unwrap_or(&[]);
            if row.len() != m - i - 1 {
                return Err(McdmError::Parse(format!("upper row {i} has {} entries, expected {}", row.len(), m - i - 1)));
            }
            for (off, &v) in row.iter().enumerate() {
                let j = i + 1 + off;
                a[[i, j]] = v;
                a[[j, i]] = 1.0 / v;
            }
        }
        PairwiseMatrix::new(names, a)
    }

    /// The perfectly consistent matrix `a[i][j] = w[i] / w[j]`.
    pub fn from_weights(names: Vec<String>, w: &[f64]) -> Result<Self, McdmError> {
        let m = w.len();
        PairwiseMatrix::new(names, Array2::from_shape_fn((m, m), |(i, j)| w[i] / w[j]))
    }

    pub fn ones(names: Vec<String>) -> Self {
        let m = names.len();
        PairwiseMatrix { names, a: Array2::ones((m, m)) }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn order(&self) -> usize {
        self.names.len()
    }

    /// Square text form: a header of criteria names, then one row per
    /// criterion.
    pub fn to_text(&self) -> String {
        let mut s = self.names.join(",");
        s.push('\n');
        for row in self.a.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

impl FromStr for PairwiseMatrix {
    type Err = McdmError;

    /// Parses [`PairwiseMatrix::to_text`] output; cells may be decimals or
    /// fractions such as `1/3`.
    fn from_str(text: &str) -> Result<Self, McdmError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| McdmError::Parse("empty document".into()))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let rows = lines
            .map(|l| l.split(',').map(parse_judgment).collect::<Result<Vec<f64>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        PairwiseMatrix::from_rows(names, &rows)
    }
}

fn parse_judgment(cell: &str) -> Result<f64, McdmError> {
    let cell = cell.trim();
    let bad = || McdmError::Parse(format!("bad cell `{cell}`"));
    match cell.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            Ok(n / d)
        }
        None => cell.parse().map_err(|_| bad()),
    }
}

/// Criterion weights with their consistency diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub criteria: Vec<String>,
    pub weights: Vec<f64>,
    pub lambda_max: f64,
    pub consistency_index: f64,
    pub consistency_ratio: f64,
    pub consistent: bool,
}

impl WeightVector {
    /// Weights given directly rather than derived from judgments; they are
    /// normalised to sum to 1.
    pub fn literal(criteria: Vec<String>, weights: Vec<f64>) -> Result<Self, McdmError> {
        if criteria.len() != weights.len() {
            return Err(McdmError::NameCount { m: weights.len(), got: criteria.len() });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || total <= 0.0 {
            return Err(McdmError::CriteriaMismatch("literal weights must be non-negative with a positive sum".into()));
        }
        Ok(WeightVector {
            criteria,
            weights: weights.iter().map(|w| w / total).collect(),
            lambda_max: weights.len() as f64,
            consistency_index: 0.0,
            consistency_ratio: 0.0,
            consistent: true,
        })
    }

    pub fn get(&self, criterion: &str) -> Option<f64> {
        self.criteria.iter().position(|c| c == criterion).map(|i| self.weights[i])
    }

    /// Weights reordered to panel feature order.
    pub fn for_panel(&self) -> Result<[f64; N_FEATURES], McdmError> {
        let mut out = [0.0; N_FEATURES];
        if self.criteria.len() != N_FEATURES {
            return Err(McdmError::CriteriaMismatch(format!(
                "{} criteria given, the panel has {N_FEATURES}",
                self.criteria.len()
            )));
        }
        for f in Feature::ALL {
            out[f.index()] = self
                .get(f.name())
                .ok_or_else(|| McdmError::CriteriaMismatch(format!("no weight for feature `{}`", f.name())))?;
        }
        Ok(out)
    }

    /// Sum of weights per dimension, for criteria that are panel features.
    pub fn dimension_totals(&self) -> BTreeMap<Dimension, f64> {
        let mut totals = BTreeMap::new();
        for (c, w) in self.criteria.iter().zip(&self.weights) {
            if let Some(f) = Feature::from_name(c) {
                *totals.entry(Dimension::of(f)).or_insert(0.0) += w;
            }
        }
        totals
    }

    /// `name,weight` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::from("criterion,weight\n");
        for (c, w) in self.criteria.iter().zip(&self.weights) {
            s.push_str(&format!("{c},{w:.6}\n"));
        }
        s
    }
}

/// Principal right eigenvector of `a` by power iteration, normalised to sum
/// to 1, with the consistency index and ratio.
pub fn principal_weights(a: &PairwiseMatrix) -> Result<WeightVector, McdmError> {
    let m = a.order();
    if m > RANDOM_INDEX.len() {
        return Err(McdmError::TooManyCriteria(m));
    }
    let mat = &a.a;
    let mut w = vec![1.0 / m as f64; m];
    let mut converged = false;
    for _ in 0..POWER_MAX_STEPS {
        let mut next: Vec<f64> = (0..m).map(|i| (0..m).map(|j| mat[[i, j]] * w[j]).sum()).collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let step = next.iter().zip(&w).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        w = next;
        if step < POWER_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(McdmError::NoConvergence(POWER_MAX_STEPS));
    }
    // With sum(w) = 1, sum(A w) is the Rayleigh-style estimate of lambda_max.
    let lambda_max: f64 = (0..m).map(|i| (0..m).map(|j| mat[[i, j]] * w[j]).sum::<f64>()).sum();
    let ci = if m > 1 { ((lambda_max - m as f64) / (m as f64 - 1.0)).max(0.0) } else { 0.0 };
    let ri = RANDOM_INDEX[m.max(1) - 1];
    let cr = if ri > 0.0 { ci / ri } else { 0.0 };
    Ok(WeightVector {
        criteria: a.names.clone(),
        weights: w,
        lambda_max,
        consistency_index: ci,
        consistency_ratio: cr,
        consistent: cr <= CONSISTENCY_THRESHOLD,
    })
}

/// Weights of one node of the hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalWeights {
    /// Global weights over every criterion.
    pub composed: WeightVector,
    pub dimensions: WeightVector,
    pub within: BTreeMap<Dimension, WeightVector>,
}

/// Composes dimension weights with within-dimension weights:
/// `w(c) = w(dimension of c) * w(c | dimension)`.
///
/// Every sub-matrix must pass the consistency gate unless
/// `allow_inconsistent` is set. The composed vector reports the largest
/// consistency ratio among the sub-matrices.
pub fn hierarchical_compose(
    dimension_matrix: &PairwiseMatrix,
    per_dimension: &BTreeMap<Dimension, PairwiseMatrix>,
    allow_inconsistent: bool,
) -> Result<HierarchicalWeights, McdmError> {
    let dims: Vec<Dimension> = dimension_matrix
        .names()
        .iter()
        .map(|n| {
            Dimension::ALL
                .into_iter()
                .find(|d| d.name().eq_ignore_ascii_case(n))
                .ok_or_else(|| McdmError::CriteriaMismatch(format!("unknown dimension `{n}`")))
        })
        .collect::<Result<_, _>>()?;
    let top = principal_weights(dimension_matrix)?;
    if !allow_inconsistent && !top.consistent {
        return Err(McdmError::Inconsistent { matrix: "dimension matrix".into(), cr: top.consistency_ratio });
    }

    let mut seen = std::collections::BTreeSet::new();
    let mut criteria = Vec::new();
    let mut weights = Vec::new();
    let mut within = BTreeMap::new();
    let (mut worst_ci, mut worst_cr) = (top.consistency_index, top.consistency_ratio);
    for (dim, dim_w) in dims.iter().zip(&top.weights) {
        let sub = per_dimension
            .get(dim)
            .ok_or_else(|| McdmError::CriteriaMismatch(format!("no judgment matrix for dimension {dim}")))?;
        let local = principal_weights(sub)?;
        if !allow_inconsistent && !local.consistent {
            return Err(McdmError::Inconsistent { matrix: format!("{dim} matrix"), cr: local.consistency_ratio });
        }
        if local.consistency_ratio > worst_cr {
            worst_cr = local.consistency_ratio;
            worst_ci = local.consistency_index;
        }
        for (c, w) in local.criteria.iter().zip(&local.weights) {
            if !seen.insert(c.clone()) {
                return Err(McdmError::CriteriaMismatch(format!("criterion `{c}` appears in two dimensions")));
            }
            criteria.push(c.clone());
            weights.push(dim_w * w);
        }
        within.insert(*dim, local);
    }
    if let Some(extra) = per_dimension.keys().find(|d| !dims.contains(d)) {
        return Err(McdmError::CriteriaMismatch(format!("matrix for {extra} is not in the dimension matrix")));
    }
    let m = weights.len() as f64;
    Ok(HierarchicalWeights {
        composed: WeightVector {
            criteria,
            weights,
            lambda_max: m,
            consistency_index: worst_ci,
            consistency_ratio: worst_cr,
            consistent: worst_cr <= CONSISTENCY_THRESHOLD,
        },
        dimensions: top,
        within,
    })
}

/// Multiplies every feature of every cell by its weight.
pub fn apply_weights(panel: &FeaturePanel, w: &WeightVector) -> Result<FeaturePanel, McdmError> {
    let weights = w.for_panel()?;
    let mut out = panel.clone();
    for (f, wf) in weights.iter().enumerate() {
        out.values.index_axis_mut(Axis(2), f).mapv_inplace(|v| v * wf);
    }
    Ok(out)
}

/// Judgment matrices reproducing a target set of weights exactly: the
/// dimension totals and, within each dimension, the relative weights of
/// its criteria.
pub fn consistent_hierarchy(
    dimension_totals: &BTreeMap<Dimension, f64>,
    within: &BTreeMap<Dimension, Vec<(String, f64)>>,
) -> Result<(PairwiseMatrix, BTreeMap<Dimension, PairwiseMatrix>), McdmError> {
    let dims: Vec<Dimension> = dimension_totals.keys().copied().collect();
    let top = PairwiseMatrix::from_weights(
        dims.iter().map(|d| d.name().to_string()).collect(),
        &dims.iter().map(|d| dimension_totals[d]).collect::<Vec<_>>(),
    )?;
    let mut subs = BTreeMap::new();
    for d in dims {
        let entries = within
            .get(&d)
            .ok_or_else(|| McdmError::CriteriaMismatch(format!("no criteria for dimension {d}")))?;
        let names = entries.iter().map(|(n, _)| n.clone()).collect();
        let ws: Vec<f64> = entries.iter().map(|(_, w)| *w).collect();
        subs.insert(d, PairwiseMatrix::from_weights(names, &ws)?);
    }
    Ok((top, subs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("g{}", i + 1)).collect()
    }

    #[test]
    fn all_ones_gives_equal_weights() {
        let w = principal_weights(&PairwiseMatrix::ones(names(4))).unwrap();
        for x in &w.weights {
            assert!((x - 0.25).abs() < 1e-12);
        }
        assert!(w.consistency_index.abs() < 1e-12);
        assert!(w.consistent);
    }

    #[test]
    fn consistent_matrix_recovers_weights() {
        let target = [0.5, 0.3, 0.2];
        let a = PairwiseMatrix::from_weights(names(3), &target).unwrap();
        let w = principal_weights(&a).unwrap();
        for (x, t) in w.weights.iter().zip(target) {
            assert!((x - t).abs() < 1e-6);
        }
        assert!(w.consistency_index < 1e-9);
    }

    #[test]
    fn validation_errors() {
        let bad = Array2::from_shape_vec((2, 2), vec![1.0, 3.0, 0.5, 1.0]).unwrap();
        assert!(matches!(PairwiseMatrix::new(names(2), bad), Err(McdmError::NotReciprocal { .. })));
        let big = Array2::from_shape_vec((2, 2), vec![1.0, 10.0, 0.1, 1.0]).unwrap();
        assert!(matches!(PairwiseMatrix::new(names(2), big), Err(McdmError::OutOfRange { .. })));
        let diag = Array2::from_shape_vec((2, 2), vec![2.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(PairwiseMatrix::new(names(2), diag), Err(McdmError::Diagonal { .. })));
        assert!(matches!(
            principal_weights(&PairwiseMatrix::ones(names(11))),
            Err(McdmError::TooManyCriteria(11))
        ));
    }

    #[test]
    fn inconsistent_matrix_trips_gate() {
        // a > b, b > c, c > a: a cyclic judgment set
        let a = PairwiseMatrix::from_upper(names(3), &[vec![9.0, 1.0 / 9.0], vec![9.0], vec![]]).unwrap();
        let w = principal_weights(&a).unwrap();
        assert!(w.consistency_ratio > 0.1);
        assert!(!w.consistent);
    }

    #[test]
    fn text_roundtrip_with_fractions() {
        let text = "a,b,c\n1,3,5\n1/3,1,2\n1/5,1/2,1\n";
        let p: PairwiseMatrix = text.parse().unwrap();
        assert!((p.matrix()[[1, 0]] - 1.0 / 3.0).abs() < 1e-15);
        let back: PairwiseMatrix = p.to_text().parse().unwrap();
        assert_eq!(back.names(), p.names());
        for (x, y) in back.matrix().iter().zip(p.matrix()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_hierarchy_gives_tenth_each() {
        let top = PairwiseMatrix::ones(Dimension::ALL.iter().map(|d| d.name().to_string()).collect());
        let subs: BTreeMap<_, _> = Dimension::ALL
            .into_iter()
            .map(|d| (d, PairwiseMatrix::ones(d.features().iter().map(|f| f.name().to_string()).collect())))
            .collect();
        // dimensions hold 3, 4 and 3 criteria, so equal dimension weights
        // give 1/3 per dimension rather than 0.1 per criterion
        let h = hierarchical_compose(&top, &subs, false).unwrap();
        let total: f64 = h.composed.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (_, t) in h.composed.dimension_totals() {
            assert!((t - 1.0 / 3.0).abs() < 1e-12);
        }

        // dimension weights proportional to dimension sizes give 0.1 each
        let sizes: Vec<f64> = Dimension::ALL.iter().map(|d| d.features().len() as f64).collect();
        let top = PairwiseMatrix::from_weights(top.names().to_vec(), &sizes).unwrap();
        let h = hierarchical_compose(&top, &subs, false).unwrap();
        for w in &h.composed.weights {
            assert!((w - 0.1).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_equal_judgments_give_tenth_each() {
        let w = principal_weights(&PairwiseMatrix::ones(crate::features::feature_names())).unwrap();
        for x in &w.weights {
            assert!((x - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn inconsistent_submatrix_is_rejected_by_name() {
        let top = PairwiseMatrix::ones(Dimension::ALL.iter().map(|d| d.name().to_string()).collect());
        let mut subs: BTreeMap<_, _> = Dimension::ALL
            .into_iter()
            .map(|d| (d, PairwiseMatrix::ones(d.features().iter().map(|f| f.name().to_string()).collect())))
            .collect();
        let rfm: Vec<String> = Dimension::Rfm.features().iter().map(|f| f.name().to_string()).collect();
        subs.insert(
            Dimension::Rfm,
            PairwiseMatrix::from_upper(rfm, &[vec![9.0, 1.0 / 9.0], vec![9.0], vec![]]).unwrap(),
        );
        match hierarchical_compose(&top, &subs, false) {
            Err(McdmError::Inconsistent { matrix, cr }) => {
                assert_eq!(matrix, "RFM matrix");
                assert!(cr > 0.1);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        let h = hierarchical_compose(&top, &subs, true).unwrap();
        assert!(!h.composed.consistent);
    }

    #[test]
    fn apply_weights_scales_features() {
        use crate::features::{build_panel, Interval};
        use crate::ingest::{FiscalPeriod, TransactionRecord};
        let d = chrono::NaiveDate::from_ymd_opt(2023, 1, 10).unwrap();
        let recs = vec![TransactionRecord {
            customer_id: "A".into(),
            fiscal_period: FiscalPeriod::new(2023, 1).unwrap(),
            created_on: d,
            bill_date: d,
            product_group: "P".into(),
            distribution_channel: "X".into(),
            weight_tons: 3.0,
            sales_value: 10.0,
            cost_value: 4.0,
        }];
        let panel = build_panel(&recs, d, Interval::Month).unwrap();
        let mut ws = vec![0.1; N_FEATURES];
        ws[Feature::Volume.index()] = 0.0;
        ws[Feature::Sales.index()] = 0.2;
        let w = WeightVector::literal(crate::features::feature_names(), ws.clone()).unwrap();
        let out = apply_weights(&panel, &w).unwrap();
        for f in Feature::ALL {
            let before = panel.values[[0, 0, f.index()]];
            let after = out.values[[0, 0, f.index()]];
            assert!((after - before * w.weights[f.index()]).abs() < 1e-12);
        }
        assert_eq!(out.values[[0, 0, Feature::Volume.index()]], 0.0);

        let short = WeightVector::literal(vec!["recency".into()], vec![1.0]).unwrap();
        assert!(matches!(apply_weights(&panel, &short), Err(McdmError::CriteriaMismatch(_))));
    }
}
