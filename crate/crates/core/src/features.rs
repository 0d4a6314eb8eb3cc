//! The ten-criteria customer panel: RFM, growth and stability features per
//! customer and per period, plus full-horizon aggregates.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;

use chrono::NaiveDate;
use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FiscalPeriod, TransactionRecord};
use crate::Exec;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no transaction records")]
    Empty,
    #[error("as-of date {as_of} precedes the last bill date {last_bill}")]
    AsOfBeforeData { as_of: NaiveDate, last_bill: NaiveDate },
    #[error("spearman correlation needs at least 3 customers, got {0}")]
    TooFewCustomers(usize),
    #[error("csv write failed: {0}")]
    Write(#[from] csv::Error),
}

pub const N_FEATURES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Recency,
    Frequency,
    LtmFrequency,
    Volume,
    AvgVolume,
    ProductMix,
    Loyalty,
    Sales,
    AvgProfit,
    ProfitMargin,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::Recency,
        Feature::Frequency,
        Feature::LtmFrequency,
        Feature::Volume,
        Feature::AvgVolume,
        Feature::ProductMix,
        Feature::Loyalty,
        Feature::Sales,
        Feature::AvgProfit,
        Feature::ProfitMargin,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Recency => "recency",
            Feature::Frequency => "frequency",
            Feature::LtmFrequency => "ltm_frequency",
            Feature::Volume => "volume",
            Feature::AvgVolume => "avg_volume",
            Feature::ProductMix => "product_mix",
            Feature::Loyalty => "loyalty",
            Feature::Sales => "sales",
            Feature::AvgProfit => "avg_profit",
            Feature::ProfitMargin => "profit_margin",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Features that are plain per-period sums, so their period slices add
    /// up to the aggregate.
    pub fn is_additive(self) -> bool {
        matches!(self, Feature::Frequency | Feature::Volume | Feature::Sales)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn feature_names() -> Vec<String> {
    Feature::ALL.iter().map(|f| f.name().to_string()).collect()
}

/// Full-horizon criteria for one customer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Days from the last bill date to the as-of date.
    pub recency: f64,
    pub frequency: f64,
    /// Orders billed in the 365 days ending at the as-of date.
    pub ltm_frequency: f64,
    /// Total tons.
    pub volume: f64,
    /// Tons per active period.
    pub avg_volume: f64,
    pub product_mix: f64,
    /// Fractional years since the first bill date.
    pub loyalty: f64,
    pub sales: f64,
    /// Profit per active period.
    pub avg_profit: f64,
    /// Mean per-transaction margin in percent; zero-sales lines excluded.
    pub profit_margin: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.recency,
            self.frequency,
            self.ltm_frequency,
            self.volume,
            self.avg_volume,
            self.product_mix,
            self.loyalty,
            self.sales,
            self.avg_profit,
            self.profit_margin,
        ]
    }

    pub fn get(&self, f: Feature) -> f64 {
        self.to_array()[f.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interval {
    Month,
    Year,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingMethod {
    Zscore,
    Minmax,
}

/// `scaled = (raw - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub offset: f64,
    pub scale: f64,
    /// The feature had a single value and was mapped to 0.
    pub constant: bool,
}

impl FeatureScale {
    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.offset) / self.scale
    }

    pub fn invert(&self, scaled: f64) -> f64 {
        scaled * self.scale + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub method: ScalingMethod,
    pub features: Vec<FeatureScale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePanel {
    pub customers: Vec<String>,
    /// Period labels: `YYYYMM` for monthly panels, `YYYY` for yearly ones.
    pub periods: Vec<u32>,
    pub interval: Interval,
    pub as_of: NaiveDate,
    /// `[customer, period, feature]`.
    pub values: Array3<f64>,
    /// Transaction lines per customer and period.
    pub activity: Array2<u32>,
    pub aggregate: Vec<FeatureVector>,
    /// Present once [`scale_panel`] has run; maps the unscaled values to
    /// the stored ones.
    pub scaling: Option<Scaling>,
}

impl FeaturePanel {
    pub fn n_customers(&self) -> usize {
        self.customers.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn series(&self, customer: usize, feature: Feature) -> Vec<f64> {
        self.values.slice(ndarray::s![customer, .., feature.index()]).to_vec()
    }

    /// Per-feature, per-customer contiguous series restricted to
    /// `periods`: `out[feature][customer]`.
    pub fn feature_series(&self, periods: std::ops::Range<usize>) -> Vec<Vec<Vec<f64>>> {
        (0..N_FEATURES)
            .map(|f| {
                (0..self.n_customers())
                    .map(|c| self.values.slice(ndarray::s![c, periods.clone(), f]).to_vec())
                    .collect()
            })
            .collect()
    }

    /// The stored values mapped back through the scaling parameters.
    pub fn unscaled_values(&self) -> Array3<f64> {
        let mut out = self.values.clone();
        if let Some(s) = &self.scaling {
            for (f, fs) in s.features.iter().enumerate() {
                out.index_axis_mut(Axis(2), f).mapv_inplace(|v| fs.invert(v));
            }
        }
        out
    }

    /// Aggregate vectors as an `n_customers x 10` matrix.
    pub fn aggregate_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n_customers(), N_FEATURES));
        for (mut row, fv) in m.rows_mut().into_iter().zip(&self.aggregate) {
            row.assign(&ndarray::arr1(&fv.to_array()));
        }
        m
    }

    /// Whether a customer has any transaction within `periods`.
    pub fn is_active(&self, customer: usize, periods: std::ops::Range<usize>) -> bool {
        self.activity.slice(ndarray::s![customer, periods]).iter().any(|&n| n > 0)
    }

    /// Columnar audit export: `customer_id,period,<10 features>`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["customer_id".to_string(), "period".to_string()];
        header.extend(feature_names());
        w.write_record(&header)?;
        for (c, id) in self.customers.iter().enumerate() {
            for (t, p) in self.periods.iter().enumerate() {
                let mut row = vec![id.clone(), p.to_string()];
                row.extend((0..N_FEATURES).map(|f| self.values[[c, t, f]].to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn period_key(p: FiscalPeriod, interval: Interval) -> i64 {
    match interval {
        Interval::Month => p.year() as i64 * 12 + (p.month() as i64 - 1),
        Interval::Year => p.year() as i64,
    }
}

fn key_label(key: i64, interval: Interval) -> u32 {
    match interval {
        Interval::Month => (key / 12) as u32 * 100 + (key % 12) as u32 + 1,
        Interval::Year => key as u32,
    }
}

fn key_bounds(key: i64, interval: Interval) -> (NaiveDate, NaiveDate) {
    match interval {
        Interval::Month => {
            let p = FiscalPeriod::new((key / 12) as u32, (key % 12) as u32 + 1).expect("valid key");
            (p.first_day(), p.last_day())
        }
        Interval::Year => (
            NaiveDate::from_ymd_opt(key as i32, 1, 1).expect("valid year"),
            NaiveDate::from_ymd_opt(key as i32, 12, 31).expect("valid year"),
        ),
    }
}

const DAYS_PER_YEAR: f64 = 365.25;
const LTM_DAYS: i64 = 365;

/// Builds the panel from cleaned records.
pub fn build_panel(
    records: &[TransactionRecord],
    as_of: NaiveDate,
    interval: Interval,
) -> Result<FeaturePanel, FeatureError> {
    build_panel_with(records, as_of, interval, Exec::default())
}

pub fn build_panel_with(
    records: &[TransactionRecord],
    as_of: NaiveDate,
    interval: Interval,
    exec: Exec,
) -> Result<FeaturePanel, FeatureError> {
    if records.is_empty() {
        return Err(FeatureError::Empty);
    }
    let last_bill = records.iter().map(|r| r.bill_date).max().expect("non-empty");
    if as_of < last_bill {
        return Err(FeatureError::AsOfBeforeData { as_of, last_bill });
    }
    let first_key = records.iter().map(|r| period_key(r.fiscal_period, interval)).min().expect("non-empty");
    let last_key = records.iter().map(|r| period_key(r.fiscal_period, interval)).max().expect("non-empty");
    let n_periods = (last_key - first_key + 1) as usize;
    let bounds: Vec<(NaiveDate, NaiveDate)> =
        (first_key..=last_key).map(|k| key_bounds(k, interval)).collect();
    let periods: Vec<u32> = (first_key..=last_key).map(|k| key_label(k, interval)).collect();

    let mut by_customer: BTreeMap<&str, Vec<&TransactionRecord>> = BTreeMap::new();
    for r in records {
        by_customer.entry(r.customer_id.as_str()).or_default().push(r);
    }
    let groups: Vec<(&str, Vec<&TransactionRecord>)> = by_customer.into_iter().collect();

    let rows = exec.map_slice(&groups, |(_, recs)| {
        customer_rows(recs, interval, first_key, &bounds, as_of)
    });

    let n = groups.len();
    let mut values = Array3::zeros((n, n_periods, N_FEATURES));
    let mut activity = Array2::zeros((n, n_periods));
    let mut aggregate = Vec::with_capacity(n);
    for (c, (slab, counts, agg)) in rows.into_iter().enumerate() {
        values.index_axis_mut(Axis(0), c).assign(&slab);
        activity.row_mut(c).assign(&ndarray::arr1(&counts));
        aggregate.push(agg);
    }
    Ok(FeaturePanel {
        customers: groups.iter().map(|(id, _)| id.to_string()).collect(),
        periods,
        interval,
        as_of,
        values,
        activity,
        aggregate,
        scaling: None,
    })
}

fn customer_rows(
    recs: &[&TransactionRecord],
    interval: Interval,
    first_key: i64,
    bounds: &[(NaiveDate, NaiveDate)],
    as_of: NaiveDate,
) -> (Array2<f64>, Vec<u32>, FeatureVector) {
    let t_len = bounds.len();
    let mut counts = vec![0u32; t_len];
    let mut tons = vec![0.0; t_len];
    let mut sales = vec![0.0; t_len];
    let mut profit = vec![0.0; t_len];
    let mut margin_sum = vec![0.0; t_len];
    let mut margin_n = vec![0u32; t_len];
    let mut groups: Vec<HashSet<&str>> = vec![HashSet::new(); t_len];
    for r in recs {
        let t = (period_key(r.fiscal_period, interval) - first_key) as usize;
        counts[t] += 1;
        tons[t] += r.weight_tons;
        sales[t] += r.sales_value;
        profit[t] += r.profit();
        if r.sales_value != 0.0 {
            margin_sum[t] += r.profit() / r.sales_value * 100.0;
            margin_n[t] += 1;
        }
        groups[t].insert(r.product_group.as_str());
    }
    let mut bills: Vec<NaiveDate> = recs.iter().map(|r| r.bill_date).collect();
    bills.sort_unstable();
    let first_bill = bills[0];
    let panel_start = bounds[0].0;

    let mut slab = Array2::zeros((t_len, N_FEATURES));
    let (mut cum_tons, mut cum_profit, mut active) = (0.0, 0.0, 0u32);
    let (mut cum_margin, mut cum_margin_n) = (0.0, 0u32);
    for t in 0..t_len {
        let end = bounds[t].1;
        let billed = bills.partition_point(|&d| d <= end);
        let recency = if billed > 0 {
            (end - bills[billed - 1]).num_days() as f64
        } else {
            (end - panel_start).num_days() as f64
        };
        let ltm_start = end - chrono::Duration::days(LTM_DAYS);
        let ltm = billed - bills.partition_point(|&d| d < ltm_start);
        let loyalty = if first_bill <= end {
            (end - first_bill).num_days() as f64 / DAYS_PER_YEAR
        } else {
            0.0
        };
        cum_tons += tons[t];
        cum_profit += profit[t];
        active += u32::from(counts[t] > 0);
        cum_margin += margin_sum[t];
        cum_margin_n += margin_n[t];
        let per_active = |x: f64| if active > 0 { x / active as f64 } else { 0.0 };
        let row = [
            recency,
            counts[t] as f64,
            ltm as f64,
            tons[t],
            per_active(cum_tons),
            groups[t].len() as f64,
            loyalty,
            sales[t],
            per_active(cum_profit),
            if cum_margin_n > 0 { cum_margin / cum_margin_n as f64 } else { 0.0 },
        ];
        slab.row_mut(t).assign(&ndarray::arr1(&row));
    }

    let last_bill = *bills.last().expect("non-empty");
    let ltm_start = as_of - chrono::Duration::days(LTM_DAYS);
    let all_groups: BTreeSet<&str> = recs.iter().map(|r| r.product_group.as_str()).collect();
    let volume: f64 = tons.iter().sum();
    let total_sales: f64 = sales.iter().sum();
    let total_profit: f64 = profit.iter().sum();
    let margin_total: f64 = margin_sum.iter().sum();
    let margin_count: u32 = margin_n.iter().sum();
    let agg = FeatureVector {
        recency: (as_of - last_bill).num_days() as f64,
        frequency: counts.iter().map(|&c| c as f64).sum(),
        ltm_frequency: bills.iter().filter(|&&d| d >= ltm_start && d <= as_of).count() as f64,
        volume,
        avg_volume: if active > 0 { volume / active as f64 } else { 0.0 },
        product_mix: all_groups.len() as f64,
        loyalty: ((as_of - first_bill).num_days() as f64 / DAYS_PER_YEAR).max(0.0),
        sales: total_sales,
        avg_profit: if active > 0 { total_profit / active as f64 } else { 0.0 },
        profit_margin: if margin_count > 0 { margin_total / margin_count as f64 } else { 0.0 },
    };
    (slab, counts, agg)
}

/// Per-column scaling of a `rows x features` matrix. Constant columns map
/// to zero and are logged.
pub fn scale_columns(m: ArrayView2<f64>, method: ScalingMethod) -> (Array2<f64>, Vec<FeatureScale>) {
    let mut out = m.to_owned();
    let mut params = Vec::with_capacity(m.ncols());
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        let n = col.len() as f64;
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let fs = if !(max > min) {
            log::warn!("feature column {j} is constant; scaled to 0");
            FeatureScale { offset: if min.is_finite() { min } else { 0.0 }, scale: 1.0, constant: true }
        } else {
            match method {
                ScalingMethod::Zscore => {
                    let mean = col.sum() / n;
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    FeatureScale { offset: mean, scale: var.sqrt(), constant: false }
                }
                ScalingMethod::Minmax => FeatureScale { offset: min, scale: max - min, constant: false },
            }
        };
        col.mapv_inplace(|v| fs.apply(v));
        params.push(fs);
    }
    (out, params)
}

/// Scales each feature over the whole customer x period plane.
///
/// Scaling an already scaled panel composes the parameters, so
/// [`FeaturePanel::unscaled_values`] always recovers the original values.
pub fn scale_panel(panel: &FeaturePanel, method: ScalingMethod) -> FeaturePanel {
    let (c, t, f) = panel.values.dim();
    let flat = panel.values.view().into_shape_with_order((c * t, f)).expect("standard layout");
    let (scaled, params) = scale_columns(flat, method);
    let values = scaled.into_shape_with_order((c, t, f)).expect("same size");
    let features = match &panel.scaling {
        None => params,
        Some(prev) => prev
            .features
            .iter()
            .zip(&params)
            .map(|(p, q)| FeatureScale {
                offset: p.offset + q.offset * p.scale,
                scale: p.scale * q.scale,
                constant: p.constant || q.constant,
            })
            .collect(),
    };
    FeaturePanel {
        values,
        scaling: Some(Scaling { method, features }),
        ..panel.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub feature_names: Vec<String>,
    pub rho: Array2<f64>,
    /// Constant features; their off-diagonal coefficients are recorded as 0.
    pub constant_features: Vec<String>,
}

impl CorrelationMatrix {
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["feature".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for (i, name) in self.feature_names.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend(self.rho.row(i).iter().map(|v| format!("{v:.6}")));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Ranks starting at 1 with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation between the aggregate features.
pub fn spearman(aggregates: &[FeatureVector]) -> Result<CorrelationMatrix, FeatureError> {
    let columns: Vec<Vec<f64>> = Feature::ALL
        .iter()
        .map(|&f| aggregates.iter().map(|a| a.get(f)).collect())
        .collect();
    spearman_columns(&columns, feature_names())
}

/// Spearman correlation between arbitrary equally long columns.
pub fn spearman_columns(columns: &[Vec<f64>], names: Vec<String>) -> Result<CorrelationMatrix, FeatureError> {
    let n = columns.first().map_or(0, Vec::len);
    if n < 3 {
        return Err(FeatureError::TooFewCustomers(n));
    }
    let ranks: Vec<Vec<f64>> = columns.iter().map(|c| average_ranks(c)).collect();
    let m = columns.len();
    let mut rho = Array2::eye(m);
    let mut constant = BTreeSet::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let r = match pearson(&ranks[i], &ranks[j]) {
                Some(r) => r,
                None => {
                    for k in [i, j] {
                        if ranks[k].iter().all(|&v| v == ranks[k][0]) {
                            constant.insert(k);
                        }
                    }
                    0.0
                }
            };
            rho[[i, j]] = r;
            rho[[j, i]] = r;
        }
    }
    Ok(CorrelationMatrix {
        constant_features: constant.into_iter().map(|k| names[k].clone()).collect(),
        feature_names: names,
        rho,
    })
}

/// Calendar date helper for callers building `as_of` from a period label.
pub fn period_end(label: u32, interval: Interval) -> Option<NaiveDate> {
    match interval {
        Interval::Month => FiscalPeriod::new(label / 100, label % 100).map(|p| p.last_day()),
        Interval::Year => NaiveDate::from_ymd_opt(label as i32, 12, 31),
    }
}

/// Loyalty as shown in reports: whole years.
pub fn whole_years(loyalty: f64) -> u32 {
    loyalty.max(0.0).floor() as u32
}
