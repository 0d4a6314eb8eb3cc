//! Leiden against a greedy agglomerative modularity oracle, plus the
//! agreement-graph and consensus invariants.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempseg_core::consensus::{
    agreement_quotient, build_agreement_graph, consensus, leiden, ConsensusConfig, ConsensusError, Graph, LeidenConfig,
};
use tempseg_core::metrics::adjusted_rand_index;
use tempseg_core::Exec;

fn dense(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j, w) in edges {
        a[i][j] += w;
        a[j][i] += w;
    }
    a
}

/// Newman modularity straight from the adjacency matrix.
fn modularity_oracle(a: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = a.len();
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Greedy agglomeration from singletons, always taking the merge with the
/// largest modularity gain, stopping when no merge improves.
fn cnm_oracle(a: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = a.len();
    let mut labels: Vec<usize> = (0..n).collect();
    let mut q = modularity_oracle(a, &labels);
    loop {
        let mut live: Vec<usize> = labels.clone();
        live.sort_unstable();
        live.dedup();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for (x, &p) in live.iter().enumerate() {
            for &r in &live[x + 1..] {
                let trial: Vec<usize> = labels.iter().map(|&l| if l == r { p } else { l }).collect();
                let tq = modularity_oracle(a, &trial);
                if tq > q + 1e-15 && best.as_ref().is_none_or(|(bq, _)| tq > *bq) {
                    best = Some((tq, trial));
                }
            }
        }
        match best {
            Some((tq, trial)) => {
                q = tq;
                labels = trial;
            }
            None => return (labels, q),
        }
    }
}

fn planted(rng: &mut ChaCha8Rng, sizes: &[usize], p_in: f64, p_out: f64) -> (usize, Vec<(usize, usize, f64)>, Vec<usize>) {
    let truth: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat_n(c, s)).collect();
    let n = truth.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if truth[i] == truth[j] { p_in } else { p_out };
            if rng.random_bool(p) {
                edges.push((i, j, 1.0));
            }
        }
    }
    (n, edges, truth)
}

fn connected_within(a: &[Vec<f64>], labels: &[usize]) -> bool {
    let n = a.len();
    let mut seen = vec![false; n];
    let mut components_per_label = std::collections::HashMap::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        *components_per_label.entry(labels[s]).or_insert(0) += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            for u in 0..n {
                if !seen[u] && a[v][u] > 0.0 && labels[u] == labels[v] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
    }
    components_per_label.values().all(|&c| c == 1)
}

#[test]
fn leiden_matches_or_beats_greedy_agglomeration() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, edges, truth) = planted(&mut rng, &[10, 10, 10], 0.6, 0.08);
        let a = dense(n, &edges);
        let g = Graph::from_edges(n, &edges);
        let c = leiden(&g, &LeidenConfig { seed, ..Default::default() }).unwrap();
        let (_, q_greedy) = cnm_oracle(&a);
        let q = modularity_oracle(&a, &c.labels);
        assert!((q - c.modularity).abs() < 1e-12, "seed {seed}");
        assert!(q >= q_greedy - 1e-9, "seed {seed}: {q} < {q_greedy}");
        assert!(connected_within(&a, &c.labels), "seed {seed}");
        assert!(adjusted_rand_index(&c.labels, &truth) > 0.8, "seed {seed}");
    }
}

#[test]
fn weak_structure_still_yields_connected_communities() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (n, edges, _) = planted(&mut rng, &[12, 9, 7, 5], 0.3, 0.1);
        let a = dense(n, &edges);
        let g = Graph::from_edges(n, &edges);
        let c = leiden(&g, &LeidenConfig { seed, ..Default::default() }).unwrap();
        assert!(connected_within(&a, &c.labels), "seed {seed}");
        let singletons: Vec<usize> = (0..n).collect();
        assert!(c.modularity >= modularity_oracle(&a, &singletons));
        assert!(c.modularity >= modularity_oracle(&a, &vec![0; n]));
    }
}

#[test]
fn agreement_graph_on_a_hand_example() {
    // t: {0,1,2}{3,4,5}  s: {0,1}{2,3}{4,5}
    let t = [0, 0, 0, 1, 1, 1];
    let s = [0, 0, 1, 1, 2, 2];
    let ag = build_agreement_graph(&t, &s, 0.6, 0.4, Exec::Sequential).unwrap();
    let g = &ag.graph;
    let mut present = 0;
    for i in 0..6 {
        for j in (i + 1)..6 {
            let want = 0.6 * f64::from(u8::from(t[i] == t[j])) + 0.4 * f64::from(u8::from(s[i] == s[j]));
            assert!((g.weight(i, j) - want).abs() < 1e-15, "{i} {j}");
            assert_eq!(g.weight(i, j), g.weight(j, i));
            present += usize::from(want > 0.0);
        }
    }
    assert_eq!(g.edge_count(), present);
    assert_eq!(present, 7);
    assert!((g.total_weight() - (6.0 * 0.6 + 3.0 * 0.4)).abs() < 1e-12);
    assert!(matches!(
        build_agreement_graph(&t, &s, 0.7, 0.4, Exec::Sequential),
        Err(ConsensusError::Weights { .. })
    ));
}

/// Dense agreement matrix straight from the pair rule.
fn agreement_dense(t: &[usize], s: &[usize], w_t: f64) -> Vec<Vec<f64>> {
    let n = t.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a[i][j] = if t[i] == t[j] { w_t } else { 0.0 } + if s[i] == s[j] { 1.0 - w_t } else { 0.0 };
            }
        }
    }
    a
}

fn segmented(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect()
}

#[test]
fn time_series_weight_one_returns_its_partition() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(20..80);
        let k = rng.random_range(2..6);
        let t = segmented(&mut rng, n, k);
        let s = segmented(&mut rng, n, k);
        let cfg = ConsensusConfig { w_t: 1.0, w_s: 0.0, ..Default::default() };
        let c = consensus(&t, &s, &cfg, Exec::Sequential).unwrap();
        assert_eq!(adjusted_rand_index(&c.final_labels, &t), 1.0, "seed {seed}");
    }
}

proptest! {
    #[test]
    fn identical_sources_give_the_same_partition(seed in 0u64..500, w_t in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = segmented(&mut rng, 40, 4);
        let relabelled: Vec<usize> = t.iter().map(|l| (l + 3) % 4).collect();
        let cfg = ConsensusConfig { w_t, w_s: 1.0 - w_t, ..Default::default() };
        let c = consensus(&t, &relabelled, &cfg, Exec::Sequential).unwrap();
        prop_assert_eq!(adjusted_rand_index(&c.final_labels, &t), 1.0);
    }

    #[test]
    fn agreement_graph_is_symmetric_and_policy_free(seed in 0u64..500, w_t in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = segmented(&mut rng, 30, 3);
        let s = segmented(&mut rng, 30, 5);
        let a = build_agreement_graph(&t, &s, w_t, 1.0 - w_t, Exec::Sequential).unwrap();
        let b = build_agreement_graph(&t, &s, w_t, 1.0 - w_t, Exec::Parallel).unwrap();
        prop_assert_eq!(&a.graph, &b.graph);
        for i in 0..30 {
            for j in 0..30 {
                prop_assert_eq!(a.graph.weight(i, j), a.graph.weight(j, i));
            }
        }
    }

    #[test]
    fn consensus_is_deterministic_and_sized(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = segmented(&mut rng, 50, 4);
        let s: Vec<usize> = t.iter().map(|&l| if rng.random_bool(0.2) { rng.random_range(0..4) } else { l }).collect();
        let cfg = ConsensusConfig::default();
        let a = consensus(&t, &s, &cfg, Exec::Sequential).unwrap();
        let b = consensus(&t, &s, &cfg, Exec::Parallel).unwrap();
        prop_assert_eq!(&a.final_labels, &b.final_labels);
        prop_assert_eq!(a.k, 4);
        prop_assert_eq!(a.contingency_vs_t.column_totals().iter().sum::<u64>(), 50);
    }

    #[test]
    fn quotient_keeps_modularity_of_twin_respecting_partitions(seed in 0u64..500, w_t in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = segmented(&mut rng, 36, 3);
        let s = segmented(&mut rng, 36, 4);
        let q = agreement_quotient(&t, &s, w_t, 1.0 - w_t).unwrap();
        let a = agreement_dense(&t, &s, w_t);
        let node_labels: Vec<usize> = (0..q.graph.n()).map(|_| rng.random_range(0..3)).collect();
        let labels = q.expand(&node_labels);
        let want = modularity_oracle(&a, &labels);
        prop_assert!((q.graph.modularity(&node_labels, 1.0) - want).abs() < 1e-12);
        let pairs = (0..36).flat_map(|i| ((i + 1)..36).map(move |j| (i, j))).filter(|&(i, j)| a[i][j] > 0.0).count();
        prop_assert_eq!(q.full_edges, pairs);
        let total: f64 = a.iter().flatten().sum::<f64>() / 2.0;
        prop_assert!((q.graph.total_weight() - total).abs() < 1e-9);
    }

    #[test]
    fn split_twins_always_have_an_improving_move(seed in 0u64..500, w_t in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = segmented(&mut rng, 30, 3);
        let s = segmented(&mut rng, 30, 3);
        let q = agreement_quotient(&t, &s, w_t, 1.0 - w_t).unwrap();
        prop_assume!(q.exact_at(1.0));
        let a = agreement_dense(&t, &s, w_t);
        let labels: Vec<usize> = (0..30).map(|_| rng.random_range(0..4)).collect();
        let base = modularity_oracle(&a, &labels);
        for i in 0..30 {
            for j in (i + 1)..30 {
                if q.node_of[i] != q.node_of[j] || labels[i] == labels[j] {
                    continue;
                }
                let mut to_j = labels.clone();
                to_j[i] = labels[j];
                let mut to_i = labels.clone();
                to_i[j] = labels[i];
                let best = modularity_oracle(&a, &to_j).max(modularity_oracle(&a, &to_i));
                prop_assert!(best > base, "twins {i}, {j}");
            }
        }
    }

    #[test]
    fn reported_modularity_is_that_of_the_final_labels(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = segmented(&mut rng, 40, 4);
        let s: Vec<usize> = t.iter().map(|&l| if rng.random_bool(0.3) { rng.random_range(0..4) } else { l }).collect();
        let c = consensus(&t, &s, &ConsensusConfig::default(), Exec::Sequential).unwrap();
        let a = agreement_dense(&t, &tempseg_core::matching::align_labels(&t, &s), 0.6);
        prop_assert!((c.modularity - modularity_oracle(&a, &c.final_labels)).abs() < 1e-12);
        let pairs = (0..40).flat_map(|i| ((i + 1)..40).map(move |j| (i, j))).filter(|&(i, j)| a[i][j] > 0.0).count();
        prop_assert_eq!(c.edges, pairs);
    }
}
