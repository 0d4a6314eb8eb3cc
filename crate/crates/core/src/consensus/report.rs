use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Cross tabulation: `counts[final][source]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub counts: Vec<Vec<u64>>,
}

impl Contingency {
    pub fn new(final_labels: &[usize], source: &[usize]) -> Contingency {
        let kf = final_labels.iter().max().map_or(0, |m| m + 1);
        let ks = source.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0u64; ks]; kf];
        for (&f, &s) in final_labels.iter().zip(source) {
            counts[f][s] += 1;
        }
        Contingency { counts }
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_totals(&self) -> Vec<u64> {
        let ks = self.counts.first().map_or(0, Vec::len);
        (0..ks).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    /// Rows are final segments, columns source segments, with totals.
    pub fn to_csv(&self, source_name: &str) -> String {
        let cols = self.column_totals();
        let mut s = String::from("final");
        for j in 0..cols.len() {
            let _ = write!(s, ",{source_name}_{j}");
        }
        s.push_str(",total\n");
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(s, "{i}");
            for c in row {
                let _ = write!(s, ",{c}");
            }
            let _ = writeln!(s, ",{}", row.iter().sum::<u64>());
        }
        s.push_str("total");
        for c in &cols {
            let _ = write!(s, ",{c}");
        }
        let _ = writeln!(s, ",{}", cols.iter().sum::<u64>());
        s
    }
}

/// Re-allocation of one final segment against the same-numbered source
/// segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PctChange {
    pub segment: usize,
    pub final_size: usize,
    pub source_size: usize,
    /// Members whose source segment differs.
    pub entering: usize,
    /// `100 * entering / final_size`, in `[0, 100]`.
    pub pct_of_final: f64,
    /// `100 * entering / source_size`; unbounded when the source segment
    /// is small.
    pub pct_of_source: f64,
    /// `100 * |final_size - source_size| / final_size`.
    pub pct_net_size: f64,
}

pub fn pct_changes(final_labels: &[usize], source: &[usize]) -> Vec<PctChange> {
    let kf = final_labels.iter().max().map_or(0, |m| m + 1);
    let ks = source.iter().max().map_or(0, |m| m + 1);
    let mut final_size = vec![0usize; kf];
    let mut source_size = vec![0usize; kf.max(ks)];
    let mut entering = vec![0usize; kf];
    for (&f, &s) in final_labels.iter().zip(source) {
        final_size[f] += 1;
        source_size[s] += 1;
        if f != s {
            entering[f] += 1;
        }
    }
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    (0..kf)
        .map(|c| PctChange {
            segment: c,
            final_size: final_size[c],
            source_size: source_size[c],
            entering: entering[c],
            pct_of_final: pct(entering[c], final_size[c]),
            pct_of_source: if source_size[c] == 0 { f64::NAN } else { pct(entering[c], source_size[c]) },
            pct_net_size: pct(final_size[c].abs_diff(source_size[c]), final_size[c]),
        })
        .collect()
}

/// `segment,source,final_size,source_size,entering,pct_of_final,pct_of_source,pct_net_size`
/// for both sources, plus a totals line per source.
pub fn pct_change_csv(by_t: &[PctChange], by_s: &[PctChange]) -> String {
    let mut s = String::from("segment,source,final_size,source_size,entering,pct_of_final,pct_of_source,pct_net_size\n");
    for (name, rows) in [("time_series", by_t), ("stability", by_s)] {
        for r in rows {
            let _ = writeln!(
                s,
                "{},{name},{},{},{},{:.2},{:.2},{:.2}",
                r.segment, r.final_size, r.source_size, r.entering, r.pct_of_final, r.pct_of_source, r.pct_net_size
            );
        }
        let n: usize = rows.iter().map(|r| r.final_size).sum();
        let moved: usize = rows.iter().map(|r| r.entering).sum();
        let _ = writeln!(s, "total,{name},{n},{n},{moved},{:.2},{:.2},", 100.0 * moved as f64 / n.max(1) as f64, 100.0 * moved as f64 / n.max(1) as f64);
    }
    s
}
