use super::graph::Graph;
use super::leiden::{leiden, Communities, LeidenConfig};
use super::ConsensusError;

/// Merges the pair of communities with the highest inter-community edge
/// density `W(A, B) / (|A| |B|)`, sizes counted in original nodes, until `target_k` remain. Ties go to the
/// smallest pair of ids. Labels must be `0..count`.
pub fn merge_to_k(g: &Graph, labels: &[usize], target_k: usize) -> Vec<usize> {
    let count = labels.iter().max().map_or(0, |m| m + 1);
    if count <= target_k {
        return labels.to_vec();
    }
    let mut between = vec![vec![0.0; count]; count];
    let mut size = vec![0usize; count];
    for v in 0..g.n() {
        size[labels[v]] += g.size(v);
        for (u, w) in g.neighbors(v) {
            if labels[u] != labels[v] {
                between[labels[v]][labels[u]] += w;
            }
        }
    }
    let mut alive = vec![true; count];
    let mut target: Vec<usize> = (0..count).collect();
    for _ in 0..(count - target_k) {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in (0..count).filter(|&a| alive[a]) {
            for b in ((a + 1)..count).filter(|&b| alive[b]) {
                let density = between[a][b] / (size[a] * size[b]) as f64;
                if best.is_none_or(|(_, _, d)| density > d) {
                    best = Some((a, b, density));
                }
            }
        }
        let (a, b, _) = best.expect("at least two communities alive");
        alive[b] = false;
        size[a] += size[b];
        for c in 0..count {
            let w = between[b][c];
            between[a][c] += w;
            between[c][a] += w;
        }
        between[a][a] = 0.0;
        for t in target.iter_mut() {
            if *t == b {
                *t = a;
            }
        }
    }
    crate::metrics::canonical_labels(&labels.iter().map(|&l| target[l]).collect::<Vec<_>>())
}

/// Brings `communities` to exactly `target_k` groups. Too many are
/// merged by density; too few trigger re-runs at doubled resolution (up to
/// `max_doublings`), keeping the first run with at least `target_k`.
/// Returns the labels and the resolution that produced them.
pub fn reconcile_to_k(
    g: &Graph,
    communities: &Communities,
    target_k: usize,
    cfg: &LeidenConfig,
    max_doublings: usize,
) -> Result<(Vec<usize>, f64), ConsensusError> {
    if target_k < 2 || target_k > g.n() {
        return Err(ConsensusError::Reconcile { target: target_k, achieved: communities.count });
    }
    let mut labels = communities.labels.clone();
    let mut count = communities.count;
    let mut resolution = cfg.resolution;
    let mut doublings = 0;
    while count < target_k {
        if doublings == max_doublings {
            return Err(ConsensusError::Reconcile { target: target_k, achieved: count });
        }
        resolution *= 2.0;
        doublings += 1;
        let c = leiden(g, &LeidenConfig { resolution, ..*cfg })?;
        labels = c.labels;
        count = c.count;
    }
    Ok((merge_to_k(g, &labels, target_k), resolution))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn densest_pair_merges() {
        // five pairs; pairs 1 and 3 share three cross edges, others one
        let mut e = Vec::new();
        for c in 0..5 {
            e.push((2 * c, 2 * c + 1, 1.0));
        }
        e.push((2, 6, 1.0));
        e.push((3, 7, 1.0));
        e.push((2, 7, 1.0));
        e.push((0, 4, 1.0));
        e.push((5, 8, 1.0));
        let g = Graph::from_edges(10, &e);
        let labels = [0, 0, 1, 1, 2, 2, 3, 3, 4, 4];
        assert_eq!(merge_to_k(&g, &labels, 4), vec![0, 0, 1, 1, 2, 2, 1, 1, 3, 3]);
        assert_eq!(merge_to_k(&g, &labels, 5), labels.to_vec());
    }

    #[test]
    fn too_few_communities_raise_resolution() {
        // a ring of 4 cliques joined weakly; at resolution 1 they separate
        let mut e = Vec::new();
        for b in 0..4 {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    e.push((4 * b + i, 4 * b + j, 1.0));
                }
            }
            e.push((4 * b, (4 * b + 5) % 16, 0.2));
        }
        let g = Graph::from_edges(16, &e);
        let one = Communities { labels: vec![0; 16], count: 1, modularity: 0.0, passes: 0 };
        let (labels, res) = reconcile_to_k(&g, &one, 4, &LeidenConfig::default(), 6).unwrap();
        assert_eq!(res, 2.0);
        assert_eq!(labels.iter().max(), Some(&3));
        let err = reconcile_to_k(&g, &one, 16, &LeidenConfig::default(), 0).unwrap_err();
        assert!(matches!(err, ConsensusError::Reconcile { target: 16, achieved: 1 }));
    }
}
