use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::ConsensusError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeidenConfig {
    pub resolution: f64,
    pub seed: u64,
    /// Cap on repeated passes, each starting from the previous partition.
    pub max_passes: usize,
    /// Independent runs from singletons, each with its own node order; the
    /// highest-modularity result is kept.
    pub restarts: usize,
    /// With `false` the refinement phase is skipped and aggregation uses the
    /// moved partition directly, which is the Louvain method.
    pub refine: bool,
}

impl Default for LeidenConfig {
    fn default() -> Self {
        LeidenConfig { resolution: 1.0, seed: 42, max_passes: 10, restarts: 4, refine: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Communities {
    pub labels: Vec<usize>,
    pub count: usize,
    pub modularity: f64,
    pub passes: usize,
}

/// Renumbers labels to `0..count` by first occurrence.
fn compact(labels: &mut [usize]) -> usize {
    let mut map = vec![usize::MAX; labels.len().max(labels.iter().max().map_or(0, |m| m + 1))];
    let mut next = 0;
    for l in labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    next
}

/// Scratch accumulator of edge weight from one node to each community.
struct NeighborWeights {
    weight: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl NeighborWeights {
    fn new(n: usize) -> Self {
        NeighborWeights { weight: vec![0.0; n], seen: vec![false; n], touched: Vec::new() }
    }

    fn add(&mut self, c: usize, w: f64) {
        if !self.seen[c] {
            self.seen[c] = true;
            self.touched.push(c);
        }
        self.weight[c] += w;
    }

    fn clear(&mut self) {
        for &c in &self.touched {
            self.weight[c] = 0.0;
            self.seen[c] = false;
        }
        self.touched.clear();
    }
}

/// Queue-driven local moving: each node moves to the community with the
/// largest strictly positive gain over staying; neighbours outside the
/// target are re-queued after a move.
fn move_nodes_fast(g: &Graph, part: &mut [usize], gamma: f64, rng: &mut ChaCha8Rng) {
    let n = g.n();
    let two_m = 2.0 * g.total_weight();
    let mut tot = vec![0.0; n];
    let mut size = vec![0usize; n];
    for v in 0..n {
        tot[part[v]] += g.degree(v);
        size[part[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).filter(|&c| size[c] == 0).rev().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut queue: VecDeque<usize> = order.into();
    let mut queued = vec![true; n];
    let mut nw = NeighborWeights::new(n);

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let kv = g.degree(v);
        let c = part[v];
        for (u, w) in g.neighbors(v) {
            nw.add(part[u], w);
        }
        tot[c] -= kv;
        size[c] -= 1;
        let gain = |d: usize, w: f64| w - gamma * kv * tot[d] / two_m;
        let mut best = c;
        let mut best_gain = gain(c, nw.weight[c]);
        for &d in &nw.touched {
            let gd = gain(d, nw.weight[d]);
            if gd > best_gain {
                best = d;
                best_gain = gd;
            }
        }
        if best_gain < 0.0 && size[c] > 0 {
            while let Some(&e) = empty.last() {
                if size[e] == 0 && e != c {
                    best = e;
                    break;
                }
                empty.pop();
            }
        }
        nw.clear();
        tot[best] += kv;
        size[best] += 1;
        if size[c] == 0 {
            empty.push(c);
        }
        if best != c {
            part[v] = best;
            for (u, _) in g.neighbors(v) {
                if !queued[u] && part[u] != best {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
}

/// Splits each community of `part` into well-connected sub-communities,
/// starting from singletons and greedily merging singleton nodes into the
/// best-gain refined community of the same parent.
fn refine(g: &Graph, part: &[usize], gamma: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.n();
    let two_m = 2.0 * g.total_weight();
    let count = part.iter().max().map_or(0, |m| m + 1);
    let mut tot_parent = vec![0.0; count];
    for v in 0..n {
        tot_parent[part[v]] += g.degree(v);
    }
    let mut refined: Vec<usize> = (0..n).collect();
    let mut tot: Vec<f64> = (0..n).map(|v| g.degree(v)).collect();
    let mut size = vec![1usize; n];
    // weight from each refined community to the rest of its parent
    let mut external: Vec<f64> = (0..n)
        .map(|v| g.neighbors(v).filter(|&(u, _)| part[u] == part[v]).map(|(_, w)| w).sum())
        .collect();
    let own_external = external.clone();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut nw = NeighborWeights::new(n);
    for v in order {
        if size[refined[v]] != 1 {
            continue;
        }
        let s = part[v];
        let kv = g.degree(v);
        if own_external[v] < gamma * kv * (tot_parent[s] - kv) / two_m {
            continue;
        }
        for (u, w) in g.neighbors(v) {
            if part[u] == s && refined[u] != refined[v] {
                nw.add(refined[u], w);
            }
        }
        let mut best = None;
        let mut best_gain = 0.0;
        for &r in &nw.touched {
            if external[r] < gamma * tot[r] * (tot_parent[s] - tot[r]) / two_m {
                continue;
            }
            let gain = nw.weight[r] - gamma * kv * tot[r] / two_m;
            if gain > best_gain {
                best = Some(r);
                best_gain = gain;
            }
        }
        if let Some(r) = best {
            let w_vr = nw.weight[r];
            let old = refined[v];
            size[old] = 0;
            tot[old] = 0.0;
            refined[v] = r;
            size[r] += 1;
            tot[r] += kv;
            external[r] += own_external[v] - 2.0 * w_vr;
        }
        nw.clear();
    }
    compact(&mut refined);
    refined
}

/// One Leiden pass from `init`: local moves, refinement and aggregation
/// repeated until the local moves leave every aggregate node alone.
fn pass(g0: &Graph, init: &[usize], gamma: f64, refine_phase: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut level: Option<Graph> = None;
    let mut membership: Vec<usize> = (0..g0.n()).collect();
    let mut part = init.to_vec();
    compact(&mut part);
    loop {
        let g = level.as_ref().unwrap_or(g0);
        move_nodes_fast(g, &mut part, gamma, rng);
        let count = compact(&mut part);
        if count == g.n() {
            break;
        }
        let refined = if refine_phase { refine(g, &part, gamma, rng) } else { (0..g.n()).collect() };
        let n_refined = refined.iter().max().map_or(0, |m| m + 1);
        if n_refined == g.n() {
            // nothing merged within any community: aggregate on the
            // moved partition instead so the level still shrinks
            let agg = g.aggregate(&part, count);
            for m in membership.iter_mut() {
                *m = part[*m];
            }
            part = (0..count).collect();
            level = Some(agg);
            continue;
        }
        let mut next_part = vec![0; n_refined];
        for v in 0..g.n() {
            next_part[refined[v]] = part[v];
        }
        let agg = g.aggregate(&refined, n_refined);
        for m in membership.iter_mut() {
            *m = refined[*m];
        }
        part = next_part;
        level = Some(agg);
    }
    membership.iter().map(|&m| part[m]).collect()
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    crate::metrics::canonical_labels(a) == crate::metrics::canonical_labels(b)
}

/// Leiden community detection maximising weighted modularity at the given
/// resolution. Passes repeat from the previous result until the partition
/// is stable; disconnected communities are finally split into components.
/// Of `restarts` such runs the best is returned, the earliest on ties.
pub fn leiden(g: &Graph, cfg: &LeidenConfig) -> Result<Communities, ConsensusError> {
    if g.n() == 0 || g.total_weight() <= 0.0 {
        return Err(ConsensusError::Degenerate);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Communities> = None;
    for _ in 0..cfg.restarts.max(1) {
        let c = single_run(g, cfg, &mut rng);
        if best.as_ref().is_none_or(|b| c.modularity > b.modularity) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least one run"))
}

fn single_run(g: &Graph, cfg: &LeidenConfig, rng: &mut ChaCha8Rng) -> Communities {
    let mut labels: Vec<usize> = (0..g.n()).collect();
    let mut passes = 0;
    while passes < cfg.max_passes.max(1) {
        let next = pass(g, &labels, cfg.resolution, cfg.refine, rng);
        passes += 1;
        let done = same_partition(&next, &labels);
        labels = next;
        if done {
            break;
        }
    }
    let labels = g.split_disconnected(&labels);
    let count = labels.iter().max().map_or(0, |m| m + 1);
    Communities { modularity: g.modularity(&labels, cfg.resolution), labels, count, passes }
}
