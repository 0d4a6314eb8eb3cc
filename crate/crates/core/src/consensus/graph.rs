use std::collections::HashMap;

use super::ConsensusError;
use crate::Exec;

/// Undirected weighted graph in compressed adjacency form. Every edge is
/// stored in both directions; adjacency lists are sorted by target.
/// Self-loops only appear in aggregated graphs and are kept apart. Each
/// node carries the number of original nodes it stands for.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
    sizes: Vec<usize>,
    total_weight: f64,
}

impl Graph {
    /// Builds from per-node sorted adjacency lists (both directions
    /// present) and self-loop weights.
    pub(crate) fn from_adjacency(adjacency: Vec<Vec<(u32, f64)>>, self_loops: Vec<f64>) -> Graph {
        let n = adjacency.len();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let total: usize = adjacency.iter().map(Vec::len).sum();
        let mut targets = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut degree = Vec::with_capacity(n);
        for (v, list) in adjacency.into_iter().enumerate() {
            let mut d = 2.0 * self_loops[v];
            for (u, w) in list {
                targets.push(u);
                weights.push(w);
                d += w;
            }
            degree.push(d);
            offsets.push(targets.len());
        }
        let total_weight = degree.iter().sum::<f64>() / 2.0;
        let sizes = vec![1; n];
        Graph { offsets, targets, weights, self_loops, degree, sizes, total_weight }
    }

    /// From compressed rows: node `v` owns `targets[offsets[v]..offsets[v + 1]]`
    /// with matching `weights`, both directions present, sorted by target.
    pub(crate) fn from_csr(offsets: Vec<usize>, targets: Vec<u32>, weights: Vec<f64>, self_loops: Vec<f64>) -> Graph {
        let degree: Vec<f64> = (0..self_loops.len())
            .map(|v| 2.0 * self_loops[v] + weights[offsets[v]..offsets[v + 1]].iter().sum::<f64>())
            .collect();
        let total_weight = degree.iter().sum::<f64>() / 2.0;
        let sizes = vec![1; degree.len()];
        Graph { offsets, targets, weights, self_loops, degree, sizes, total_weight }
    }

    pub(crate) fn with_sizes(mut self, sizes: Vec<usize>) -> Graph {
        assert_eq!(sizes.len(), self.n());
        self.sizes = sizes;
        self
    }

    /// From an undirected edge list; duplicate edges add up.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Graph {
        let mut adjacency = vec![Vec::new(); n];
        let mut self_loops = vec![0.0; n];
        for &(a, b, w) in edges {
            if a == b {
                self_loops[a] += w;
            } else {
                adjacency[a].push((b as u32, w));
                adjacency[b].push((a as u32, w));
            }
        }
        for list in &mut adjacency {
            list.sort_by_key(|e| e.0);
            list.dedup_by(|later, kept| {
                if later.0 == kept.0 {
                    kept.1 += later.1;
                    true
                } else {
                    false
                }
            });
        }
        Graph::from_adjacency(adjacency, self_loops)
    }

    pub fn n(&self) -> usize {
        self.degree.len()
    }

    /// Total edge weight `m` (each undirected edge once, self-loops once).
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn degree(&self, v: usize) -> f64 {
        self.degree[v]
    }

    /// Original nodes represented by `v`; 1 unless aggregated.
    pub fn size(&self, v: usize) -> usize {
        self.sizes[v]
    }

    pub fn self_loop(&self, v: usize) -> f64 {
        self.self_loops[v]
    }

    /// Number of stored undirected edges, self-loops excluded.
    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[v]..self.offsets[v + 1];
        self.targets[r.clone()].iter().zip(&self.weights[r]).map(|(&u, &w)| (u as usize, w))
    }

    /// Weight of edge `{a, b}`, 0 when absent.
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return self.self_loops[a];
        }
        let r = self.offsets[a]..self.offsets[a + 1];
        match self.targets[r.clone()].binary_search(&(b as u32)) {
            Ok(i) => self.weights[r.start + i],
            Err(_) => 0.0,
        }
    }

    /// Collapses each community of `labels` (ids `0..count`) into one node.
    pub(crate) fn aggregate(&self, labels: &[usize], count: usize) -> Graph {
        let mut members = vec![Vec::new(); count];
        for (v, &c) in labels.iter().enumerate() {
            members[c].push(v);
        }
        let mut scratch = vec![0.0; count];
        let mut touched = Vec::new();
        let mut self_loops = vec![0.0; count];
        let mut adjacency = Vec::with_capacity(count);
        for (c, vs) in members.iter().enumerate() {
            for &v in vs {
                self_loops[c] += self.self_loops[v];
                for (u, w) in self.neighbors(v) {
                    let cu = labels[u];
                    if cu == c {
                        self_loops[c] += w / 2.0;
                    } else {
                        if scratch[cu] == 0.0 {
                            touched.push(cu);
                        }
                        scratch[cu] += w;
                    }
                }
            }
            touched.sort_unstable();
            adjacency.push(touched.iter().map(|&cu| (cu as u32, scratch[cu])).collect::<Vec<_>>());
            for &cu in &touched {
                scratch[cu] = 0.0;
            }
            touched.clear();
        }
        let mut sizes = vec![0; count];
        for (v, &c) in labels.iter().enumerate() {
            sizes[c] += self.sizes[v];
        }
        Graph::from_adjacency(adjacency, self_loops).with_sizes(sizes)
    }

    /// Weighted modularity `sum_c e_c / m - resolution * (d_c / 2m)^2`.
    pub fn modularity(&self, labels: &[usize], resolution: f64) -> f64 {
        let m = self.total_weight;
        if m == 0.0 {
            return 0.0;
        }
        let count = labels.iter().max().map_or(0, |c| c + 1);
        let mut internal = vec![0.0; count];
        let mut degree = vec![0.0; count];
        for v in 0..self.n() {
            let c = labels[v];
            degree[c] += self.degree[v];
            internal[c] += self.self_loops[v];
            for (u, w) in self.neighbors(v) {
                if labels[u] == c {
                    internal[c] += w / 2.0;
                }
            }
        }
        internal
            .iter()
            .zip(&degree)
            .map(|(e, d)| e / m - resolution * (d / (2.0 * m)).powi(2))
            .sum()
    }

    /// Splits every community into its connected components; labels are
    /// renumbered by first occurrence.
    pub fn split_disconnected(&self, labels: &[usize]) -> Vec<usize> {
        let n = self.n();
        let mut out = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if out[s] != usize::MAX {
                continue;
            }
            out[s] = next;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for (u, _) in self.neighbors(v) {
                    if out[u] == usize::MAX && labels[u] == labels[s] {
                        out[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        out
    }
}

fn check_inputs(labels_t: &[usize], labels_s: &[usize], w_t: f64, w_s: f64) -> Result<(), ConsensusError> {
    if labels_t.len() != labels_s.len() {
        return Err(ConsensusError::LengthMismatch(labels_t.len(), labels_s.len()));
    }
    if !(w_t >= 0.0 && w_s >= 0.0) || ((w_t + w_s) - 1.0).abs() > 1e-9 {
        return Err(ConsensusError::Weights { w_t, w_s });
    }
    Ok(())
}

/// Label-agreement graph: edge `{i, j}` has weight
/// `w_t [t_i = t_j] + w_s [s_i = s_j]`, present only when positive.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementGraph {
    pub graph: Graph,
    pub w_t: f64,
    pub w_s: f64,
}

/// Sparse construction from co-membership: node `i` only visits the
/// members of its own two clusters.
pub fn build_agreement_graph(
    labels_t: &[usize],
    labels_s: &[usize],
    w_t: f64,
    w_s: f64,
    exec: Exec,
) -> Result<AgreementGraph, ConsensusError> {
    check_inputs(labels_t, labels_s, w_t, w_s)?;
    let n = labels_t.len();
    let groups = |labels: &[usize]| {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut g = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            g[l].push(i as u32);
        }
        g
    };
    let (gt, gs) = (groups(labels_t), groups(labels_s));
    let k_s = gs.len();
    let mut both = vec![0usize; gt.len() * k_s];
    for i in 0..n {
        both[labels_t[i] * k_s + labels_s[i]] += 1;
    }
    // row lengths are known up front, so rows are written in place
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for i in 0..n {
        let c = both[labels_t[i] * k_s + labels_s[i]];
        let only_t = if w_t > 0.0 { gt[labels_t[i]].len() - c } else { 0 };
        let only_s = if w_s > 0.0 { gs[labels_s[i]].len() - c } else { 0 };
        offsets.push(offsets[i] + only_t + only_s + c - 1);
    }
    let mut targets = vec![0u32; offsets[n]];
    let mut weights = vec![0.0; offsets[n]];
    let mut rows = Vec::with_capacity(n);
    let (mut rest_t, mut rest_w) = (targets.as_mut_slice(), weights.as_mut_slice());
    for i in 0..n {
        let len = offsets[i + 1] - offsets[i];
        let (row_t, tail_t) = rest_t.split_at_mut(len);
        let (row_w, tail_w) = rest_w.split_at_mut(len);
        rows.push((row_t, row_w));
        (rest_t, rest_w) = (tail_t, tail_w);
    }
    exec.for_each_mut(&mut rows, |i, (row_t, row_w)| {
        let (a, b) = (&gt[labels_t[i]], &gs[labels_s[i]]);
        let (mut p, mut q, mut len) = (0, 0, 0);
        while p < a.len() || q < b.len() {
            let (j, in_t, in_s) = match (a.get(p), b.get(q)) {
                (Some(&x), Some(&y)) if x == y => {
                    p += 1;
                    q += 1;
                    (x, true, true)
                }
                (Some(&x), Some(&y)) if x < y => {
                    p += 1;
                    (x, true, false)
                }
                (Some(&x), None) => {
                    p += 1;
                    (x, true, false)
                }
                (_, Some(&y)) => {
                    q += 1;
                    (y, false, true)
                }
                (None, None) => unreachable!(),
            };
            if j as usize == i {
                continue;
            }
            let w = if in_t { w_t } else { 0.0 } + if in_s { w_s } else { 0.0 };
            if w > 0.0 {
                row_t[len] = j;
                row_w[len] = w;
                len += 1;
            }
        }
        debug_assert_eq!(len, row_t.len());
    });
    drop(rows);
    Ok(AgreementGraph { graph: Graph::from_csr(offsets, targets, weights, vec![0.0; n]), w_t, w_s })
}

/// The agreement graph with all customers of one `(t, s)` label pair
/// collapsed into a node. Such customers have the same weight to every
/// other customer and `w_t + w_s` to each other, so degrees, total weight
/// and the modularity of every partition keeping them together carry over.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinQuotient {
    pub graph: Graph,
    /// Quotient node of every customer.
    pub node_of: Vec<usize>,
    /// Edge count of the full agreement graph.
    pub full_edges: usize,
    pub w_t: f64,
    pub w_s: f64,
}

impl TwinQuotient {
    /// True when no partition that separates two customers of one node is
    /// stable under single-customer moves at `resolution`. Moving either of
    /// them into the other's community gains `2 (w_t + w_s) / m -
    /// resolution k^2 / m^2` in total, `k` being their degree, so one of
    /// the two moves improves modularity whenever this is positive.
    pub fn exact_at(&self, resolution: f64) -> bool {
        let g = &self.graph;
        let bound = 2.0 * (self.w_t + self.w_s) * g.total_weight();
        (0..g.n()).filter(|&c| g.size(c) > 1).all(|c| {
            let k = g.degree(c) / g.size(c) as f64;
            resolution * k * k < bound
        })
    }

    /// Customer labels from quotient-node labels.
    pub fn expand(&self, node_labels: &[usize]) -> Vec<usize> {
        self.node_of.iter().map(|&c| node_labels[c]).collect()
    }
}

/// Builds the twin quotient in `O(n + p^2)` for `p` distinct label pairs.
pub fn agreement_quotient(labels_t: &[usize], labels_s: &[usize], w_t: f64, w_s: f64) -> Result<TwinQuotient, ConsensusError> {
    check_inputs(labels_t, labels_s, w_t, w_s)?;
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut pairs = Vec::new();
    let mut sizes = Vec::new();
    let node_of: Vec<usize> = labels_t
        .iter()
        .zip(labels_s)
        .map(|(&t, &s)| {
            let c = *index.entry((t, s)).or_insert_with(|| {
                pairs.push((t, s));
                sizes.push(0);
                pairs.len() - 1
            });
            sizes[c] += 1;
            c
        })
        .collect();
    let mut edges = Vec::new();
    let mut full_edges = 0;
    for (c, &(tc, sc)) in pairs.iter().enumerate() {
        let inside = sizes[c] * (sizes[c] - 1) / 2;
        if inside > 0 {
            edges.push((c, c, (w_t + w_s) * inside as f64));
            full_edges += inside;
        }
        for (d, &(td, sd)) in pairs.iter().enumerate().skip(c + 1) {
            let w = if tc == td { w_t } else { 0.0 } + if sc == sd { w_s } else { 0.0 };
            if w > 0.0 {
                edges.push((c, d, w * (sizes[c] * sizes[d]) as f64));
                full_edges += sizes[c] * sizes[d];
            }
        }
    }
    let graph = Graph::from_edges(pairs.len(), &edges).with_sizes(sizes);
    Ok(TwinQuotient { graph, node_of, full_edges, w_t, w_s })
}
