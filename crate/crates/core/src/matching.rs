//! Maximum-overlap label alignment via the Hungarian assignment.

/// Minimum-cost assignment of rows to distinct columns (`rows <= cols`).
/// Returns `assignment[row] = col`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // Potentials-based O(n^2 m) Hungarian, 1-indexed with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Renames the ids of `labels` to match `reference` as closely as
/// possible: the relabeling maximises the number of items whose new id
/// equals their reference id.
///
/// Ids of `labels` that find no counterpart (more clusters than the
/// reference) receive fresh ids above the reference range.
pub fn align_labels(reference: &[usize], labels: &[usize]) -> Vec<usize> {
    assert_eq!(reference.len(), labels.len(), "labelings differ in length");
    if labels.is_empty() {
        return Vec::new();
    }
    let k_ref = reference.iter().max().map_or(0, |m| m + 1);
    let k_lab = labels.iter().max().map_or(0, |m| m + 1);
    let size = k_ref.max(k_lab);
    let mut overlap = vec![vec![0.0; size]; size];
    for (&r, &l) in reference.iter().zip(labels) {
        overlap[l][r] += 1.0;
    }
    let cost: Vec<Vec<f64>> = overlap.iter().map(|row| row.iter().map(|c| -c).collect()).collect();
    let assignment = min_cost_assignment(&cost);
    labels.iter().map(|&l| assignment[l]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row][j] + go(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(cost, 0, &mut vec![false; cost[0].len()])
    }

    #[test]
    fn matches_permutation_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..6);
            let m = rng.random_range(n..7);
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(0..20) as f64).collect()).collect();
            let a = min_cost_assignment(&cost);
            let mut cols = a.clone();
            cols.sort_unstable();
            cols.dedup();
            assert_eq!(cols.len(), n);
            let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            assert_eq!(total, brute_force(&cost));
        }
    }

    #[test]
    fn alignment_absorbs_permutations() {
        let reference = [0, 0, 1, 1, 2, 2, 2];
        let labels = [2, 2, 0, 0, 1, 1, 0];
        assert_eq!(align_labels(&reference, &labels), vec![0, 0, 1, 1, 2, 2, 1]);
        let permuted: Vec<usize> = labels.iter().map(|l| [1, 2, 0][*l]).collect();
        assert_eq!(align_labels(&reference, &permuted), align_labels(&reference, &labels));
    }

    #[test]
    fn extra_clusters_get_fresh_ids() {
        let reference = [0, 0, 1, 1];
        let labels = [0, 1, 2, 2];
        let out = align_labels(&reference, &labels);
        assert_eq!(out[2], 1);
        assert_eq!(out[3], 1);
        assert_ne!(out[0], out[1]);
        assert!(out[0].max(out[1]) == 2);
    }
}
