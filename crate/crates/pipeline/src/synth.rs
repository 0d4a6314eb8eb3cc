//! Synthetic transaction logs with planted customer segments.
//!
//! Each segment follows an archetype: order rate, tons per order, price,
//! margin, product breadth and linear trends over the horizon. Every
//! customer draws from its own random stream, so a log for `2n` customers
//! starts with the log for `n`.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use tempseg_core::ingest::{FiscalPeriod, TransactionRecord};

/// Which criteria carry the segment differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SignalPlacement {
    /// Levels and trends differ in every criterion.
    #[default]
    All,
    /// Order counts and sales per order are shared by all segments; only
    /// volume, product breadth and margin differ.
    GrowthStability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_customers: usize,
    pub n_periods: usize,
    pub k: usize,
    /// Relative noise scale; 0 gives identical customers within a segment.
    pub noise: f64,
    pub seed: u64,
    pub placement: SignalPlacement,
    pub first_period: FiscalPeriod,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_customers: 400,
            n_periods: 24,
            k: 4,
            noise: 0.3,
            seed: 1,
            placement: SignalPlacement::All,
            first_period: FiscalPeriod::new(2022, 1).expect("valid period"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub records: Vec<TransactionRecord>,
    /// `(customer_id, planted segment)` in customer-id order.
    pub truth: Vec<(String, usize)>,
    /// Last day of the final period.
    pub as_of: NaiveDate,
}

impl SyntheticData {
    pub fn truth_labels(&self) -> Vec<usize> {
        self.truth.iter().map(|(_, s)| *s).collect()
    }

    pub fn truth_csv(&self) -> String {
        let mut s = String::from("customer_id,segment\n");
        for (id, seg) in &self.truth {
            s.push_str(&format!("{id},{seg}\n"));
        }
        s
    }

    pub fn transactions_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut out = Vec::new();
        tempseg_core::ingest::write_transactions(&self.records, &mut out)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy)]
struct Archetype {
    orders: f64,
    order_trend: f64,
    tons: f64,
    tons_trend: f64,
    price: f64,
    margin: f64,
    groups: usize,
}

const PRODUCT_GROUPS: [&str; 8] = ["PG01", "PG02", "PG03", "PG04", "PG05", "PG06", "PG07", "PG08"];

fn archetype(segment: usize, placement: SignalPlacement) -> Archetype {
    let c = segment;
    let cycle = |xs: &[f64]| xs[c % xs.len()] * (1.0 + 0.35 * (c / xs.len()) as f64);
    match placement {
        SignalPlacement::All => Archetype {
            orders: cycle(&[2.0, 5.0, 1.5, 3.5]),
            order_trend: [0.0, 0.8, -0.4, 0.3][c % 4],
            tons: cycle(&[20.0, 8.0, 32.0, 12.0]),
            tons_trend: [0.6, 0.0, -0.4, 1.5][c % 4],
            price: [130.0, 160.0, 110.0, 145.0][c % 4],
            margin: [0.25, 0.10, 0.32, 0.16][c % 4],
            groups: ([3, 7, 1, 5][c % 4] + c / 4).min(PRODUCT_GROUPS.len()),
        },
        SignalPlacement::GrowthStability => Archetype {
            orders: 3.0,
            order_trend: 0.0,
            tons: cycle(&[20.0, 8.0, 45.0, 14.0]),
            tons_trend: [0.6, 0.0, -0.4, 1.2][c % 4],
            price: 0.0,
            margin: [0.25, 0.08, 0.32, 0.16][c % 4],
            groups: [3, 7, 1, 5][c % 4].min(PRODUCT_GROUPS.len()),
        },
    }
}

/// Sales per order shared by every segment when the signal is confined to
/// the growth and stability criteria.
const FLAT_ORDER_VALUE: f64 = 2500.0;

/// Normal draws are clipped to this many standard deviations so no single
/// customer becomes an outlier far beyond its archetype.
const NOISE_CLIP: f64 = 2.5;

pub fn generate_synthetic(cfg: &SynthConfig) -> anyhow::Result<SyntheticData> {
    anyhow::ensure!(cfg.k >= 1, "k must be at least 1");
    anyhow::ensure!(cfg.n_customers >= 5 * cfg.k, "need at least 5 customers per planted segment");
    anyhow::ensure!(cfg.n_periods >= 2, "need at least 2 periods");
    anyhow::ensure!(cfg.noise >= 0.0 && cfg.noise.is_finite(), "noise must be a non-negative number");
    let noisy = cfg.noise > 0.0;
    let periods: Vec<FiscalPeriod> =
        std::iter::successors(Some(cfg.first_period), |p| Some(p.succ())).take(cfg.n_periods).collect();
    let horizon = (cfg.n_periods - 1) as f64;
    let mut records = Vec::new();
    let mut truth = Vec::with_capacity(cfg.n_customers);
    for i in 0..cfg.n_customers {
        let segment = i % cfg.k;
        let id = format!("C{i:06}");
        truth.push((id.clone(), segment));
        let a = archetype(segment, cfg.placement);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let normal = |rng: &mut ChaCha8Rng| if noisy { rng.sample::<f64, _>(StandardNormal).clamp(-NOISE_CLIP, NOISE_CLIP) } else { 0.0 };
        let level = (0.5 * cfg.noise * normal(&mut rng)).exp();
        let channel = if i % 2 == 0 { "Direct" } else { "Distributor" };
        let mut order_no = 0usize;
        for (t, period) in periods.iter().enumerate() {
            let progress = t as f64 / horizon;
            let rate = a.orders * (1.0 + a.order_trend * progress);
            let rate = if cfg.placement == SignalPlacement::All { rate * level } else { rate };
            let jitter = if noisy { rng.random::<f64>() } else { 0.5 };
            let count = (rate + jitter).floor().max(0.0) as usize;
            for _ in 0..count {
                let day: u32 = if noisy { rng.random_range(1..=28) } else { 1 + (order_no as u32 * 7) % 28 };
                let bill = period.first_day().with_day0(day - 1).expect("day within month");
                let created = bill - chrono::Duration::days(2);
                let mut tons = a.tons * (1.0 + a.tons_trend * progress) * (cfg.noise * normal(&mut rng)).exp();
                if cfg.placement == SignalPlacement::GrowthStability {
                    tons *= level;
                }
                let sales = match cfg.placement {
                    SignalPlacement::All => tons * a.price * (0.3 * cfg.noise * normal(&mut rng)).exp(),
                    SignalPlacement::GrowthStability => FLAT_ORDER_VALUE * (0.3 * cfg.noise * normal(&mut rng)).exp(),
                };
                let margin = a.margin + 0.05 * cfg.noise * normal(&mut rng);
                let group = if noisy { rng.random_range(0..a.groups) } else { order_no % a.groups };
                records.push(TransactionRecord {
                    customer_id: id.clone(),
                    fiscal_period: *period,
                    created_on: created,
                    bill_date: bill,
                    product_group: PRODUCT_GROUPS[group].to_string(),
                    distribution_channel: channel.to_string(),
                    weight_tons: round4(tons),
                    sales_value: round2(sales),
                    cost_value: round2(sales * (1.0 - margin)),
                });
                order_no += 1;
            }
        }
        if order_no == 0 {
            // every customer needs at least one line to appear in the panel
            let period = periods[0];
            records.push(TransactionRecord {
                customer_id: id.clone(),
                fiscal_period: period,
                created_on: period.first_day(),
                bill_date: period.first_day(),
                product_group: PRODUCT_GROUPS[0].to_string(),
                distribution_channel: channel.to_string(),
                weight_tons: round4(a.tons),
                sales_value: round2(FLAT_ORDER_VALUE),
                cost_value: round2(FLAT_ORDER_VALUE * (1.0 - a.margin)),
            });
        }
    }
    let as_of = periods.last().expect("at least two periods").last_day();
    Ok(SyntheticData { records, truth, as_of })
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_customers_doubles_transactions() {
        for placement in [SignalPlacement::All, SignalPlacement::GrowthStability] {
            let small = generate_synthetic(&SynthConfig { n_customers: 400, placement, ..Default::default() }).unwrap();
            let large = generate_synthetic(&SynthConfig { n_customers: 800, placement, ..Default::default() }).unwrap();
            let ratio = large.records.len() as f64 / small.records.len() as f64;
            assert!((ratio - 2.0).abs() <= 0.02, "{placement:?}: {ratio}");
            // the first half of the larger log is the smaller log
            assert_eq!(&large.records[..small.records.len()], &small.records[..]);
        }
    }

    #[test]
    fn zero_noise_customers_in_a_segment_match() {
        let d = generate_synthetic(&SynthConfig { n_customers: 20, noise: 0.0, ..Default::default() }).unwrap();
        let lines = |id: &str| d.records.iter().filter(|r| r.customer_id == id).map(|r| (r.bill_date, r.weight_tons)).collect::<Vec<_>>();
        assert_eq!(lines("C000000"), lines("C000004"));
        assert_ne!(lines("C000000"), lines("C000001"));
    }

    #[test]
    fn flat_placement_shares_order_counts_and_value() {
        let d = generate_synthetic(&SynthConfig {
            n_customers: 20,
            noise: 0.0,
            placement: SignalPlacement::GrowthStability,
            ..Default::default()
        })
        .unwrap();
        let count = |id: &str| d.records.iter().filter(|r| r.customer_id == id).count();
        assert_eq!(count("C000000"), count("C000001"));
        assert!(d.records.iter().all(|r| r.sales_value == FLAT_ORDER_VALUE));
    }

    #[test]
    fn dates_and_truth_are_consistent() {
        let d = generate_synthetic(&SynthConfig { n_customers: 40, ..Default::default() }).unwrap();
        assert!(d.records.iter().all(|r| r.bill_date.month() == r.fiscal_period.month() && r.bill_date <= d.as_of));
        assert_eq!(d.truth.len(), 40);
        assert_eq!(d.truth_labels()[..5], [0, 1, 2, 3, 0]);
        assert!(generate_synthetic(&SynthConfig { n_customers: 10, k: 4, ..Default::default() }).is_err());
    }
}
