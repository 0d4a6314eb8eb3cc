//! Consensus timing on synthetic partitions of growing size.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tempseg_core::consensus::{agreement_quotient, build_agreement_graph, leiden, LeidenConfig};
use tempseg_core::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub k: usize,
    /// Share of customers whose stability label differs from their
    /// time-series label.
    pub disagreement: f64,
    /// Timings are the minimum over this many repetitions.
    pub repeats: usize,
    pub seed: u64,
    pub w_t: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { k: 4, disagreement: 0.2, repeats: 3, seed: 7, w_t: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    /// Edges of the full agreement graph.
    pub edges: usize,
    /// Graph plus Leiden as consensus runs them.
    pub seconds: f64,
    /// Full agreement graph plus Leiden, for comparison.
    pub full_graph_seconds: f64,
}

/// Two partitions of `n` customers into `k` balanced segments that agree
/// except for a `disagreement` share of reassigned customers.
pub fn synthetic_partitions(n: usize, cfg: &BenchConfig) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t: Vec<usize> = (0..n).map(|i| i % cfg.k).collect();
    let s = t
        .iter()
        .map(|&l| if rng.random_bool(cfg.disagreement) { (l + rng.random_range(1..cfg.k)) % cfg.k } else { l })
        .collect();
    (t, s)
}

fn time_best<T>(repeats: usize, mut f: impl FnMut() -> anyhow::Result<T>) -> anyhow::Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..repeats {
        let start = Instant::now();
        let out = f()?;
        best = best.min(start.elapsed().as_secs_f64());
        last = Some(out);
    }
    Ok((best, last.expect("at least one repetition")))
}

/// Times agreement-graph construction plus Leiden for every size, both on
/// the path consensus takes (the twin quotient when exact) and on the full
/// agreement graph.
pub fn benchmark_consensus(sizes: &[usize], cfg: &BenchConfig, exec: Exec) -> anyhow::Result<Vec<BenchRow>> {
    anyhow::ensure!(sizes.windows(2).all(|w| w[0] < w[1]), "sizes must be strictly ascending");
    anyhow::ensure!(cfg.k >= 2 && cfg.repeats >= 1, "need k >= 2 and at least one repetition");
    let leiden_cfg = LeidenConfig { seed: cfg.seed, ..Default::default() };
    let (w_t, w_s) = (cfg.w_t, 1.0 - cfg.w_t);
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let (t, s) = synthetic_partitions(n, cfg);
        let (seconds, (labels, edges)) = time_best(cfg.repeats, || {
            let q = agreement_quotient(&t, &s, w_t, w_s)?;
            if q.exact_at(leiden_cfg.resolution) {
                Ok((q.expand(&leiden(&q.graph, &leiden_cfg)?.labels), q.full_edges))
            } else {
                let g = build_agreement_graph(&t, &s, w_t, w_s, exec)?.graph;
                Ok((leiden(&g, &leiden_cfg)?.labels, g.edge_count()))
            }
        })?;
        let (full_graph_seconds, _) = time_best(cfg.repeats, || {
            let g = build_agreement_graph(&t, &s, w_t, w_s, exec)?.graph;
            Ok(leiden(&g, &leiden_cfg)?.labels)
        })?;
        log::debug!("n = {n}: {} communities", labels.iter().max().map_or(0, |m| m + 1));
        rows.push(BenchRow { n, edges, seconds, full_graph_seconds });
    }
    Ok(rows)
}

/// `n,edges,seconds,full_graph_seconds` with six decimals.
pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("n,edges,seconds,full_graph_seconds\n");
    for r in rows {
        s.push_str(&format!("{},{},{:.6},{:.6}\n", r.n, r.edges, r.seconds, r.full_graph_seconds));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_one_row_per_size() {
        let rows = benchmark_consensus(&[200, 400], &BenchConfig { repeats: 1, ..Default::default() }, Exec::Sequential).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].edges > rows[0].edges);
        let table = bench_table(&rows);
        assert!(table.starts_with("n,edges,seconds,full_graph_seconds\n200,"));
        assert_eq!(table.lines().count(), 3);
        assert!(benchmark_consensus(&[400, 200], &BenchConfig::default(), Exec::Sequential).is_err());
    }

    #[test]
    fn partitions_disagree_at_the_requested_rate() {
        let (t, s) = synthetic_partitions(10_000, &BenchConfig::default());
        let share = t.iter().zip(&s).filter(|(a, b)| a != b).count() as f64 / 10_000.0;
        assert!((share - 0.2).abs() < 0.02);
    }
}
