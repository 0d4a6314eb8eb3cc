use serde::{Deserialize, Serialize};

use super::{check_k, ClusterError, Method, SegmentationResult};
use crate::tsdist::DistanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Complete,
    Single,
}

/// One merge step. Clusters are identified by their smallest member, so
/// `a < b` and the merged cluster keeps id `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Labels after replaying the first `n - k` merges, numbered by first
    /// occurrence. `k = n` leaves every item alone.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>, ClusterError> {
        check_k(k, self.n, 1, self.n)?;
        let mut parent: Vec<usize> = (0..self.n).collect();
        for m in &self.merges[..self.n - k] {
            parent[m.b] = m.a;
        }
        fn root(parent: &[usize], mut i: usize) -> usize {
            while parent[i] != i {
                i = parent[i];
            }
            i
        }
        let roots: Vec<usize> = (0..self.n).map(|i| root(&parent, i)).collect();
        Ok(crate::metrics::canonical_labels(&roots))
    }
}

/// Bottom-up merge tree under `linkage`. At equal linkage distance the
/// pair `(a, b)` with the lexicographically smallest ids merges first.
pub fn dendrogram(d: &DistanceMatrix, linkage: Linkage) -> Dendrogram {
    let n = d.n();
    let mut dist: Vec<f64> = d.d.iter().copied().collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    // nearest active partner with a larger id, per active cluster
    let mut nn = vec![usize::MAX; n];
    let mut nn_dist = vec![f64::INFINITY; n];

    let rescan = |i: usize, dist: &[f64], active: &[bool], nn: &mut [usize], nn_dist: &mut [f64]| {
        nn[i] = usize::MAX;
        nn_dist[i] = f64::INFINITY;
        for j in (i + 1)..n {
            if active[j] && dist[i * n + j] < nn_dist[i] {
                nn[i] = j;
                nn_dist[i] = dist[i * n + j];
            }
        }
    };
    for i in 0..n {
        rescan(i, &dist, &active, &mut nn, &mut nn_dist);
    }

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut a = usize::MAX;
        for i in 0..n {
            if active[i] && nn[i] != usize::MAX && (a == usize::MAX || nn_dist[i] < nn_dist[a]) {
                a = i;
            }
        }
        let b = nn[a];
        let height = nn_dist[a];
        let (sa, sb) = (size[a] as f64, size[b] as f64);
        for c in 0..n {
            if !active[c] || c == a || c == b {
                continue;
            }
            let (dac, dbc) = (dist[a * n + c], dist[b * n + c]);
            let v = match linkage {
                Linkage::Average => (sa * dac + sb * dbc) / (sa + sb),
                Linkage::Complete => dac.max(dbc),
                Linkage::Single => dac.min(dbc),
            };
            dist[a * n + c] = v;
            dist[c * n + a] = v;
        }
        active[b] = false;
        size[a] += size[b];
        merges.push(Merge { a, b, height, size: size[a] });

        rescan(a, &dist, &active, &mut nn, &mut nn_dist);
        for i in 0..a {
            if !active[i] {
                continue;
            }
            if nn[i] == a || nn[i] == b {
                rescan(i, &dist, &active, &mut nn, &mut nn_dist);
            } else {
                let v = dist[i * n + a];
                if v < nn_dist[i] || (v == nn_dist[i] && a < nn[i]) {
                    nn[i] = a;
                    nn_dist[i] = v;
                }
            }
        }
        for i in (a + 1)..b {
            if active[i] && nn[i] == b {
                rescan(i, &dist, &active, &mut nn, &mut nn_dist);
            }
        }
    }
    Dendrogram { n, linkage, merges }
}

/// Agglomerative partition into `k` clusters, `2 <= k <= n - 1`.
pub fn agglomerative(d: &DistanceMatrix, k: usize, linkage: Linkage) -> Result<SegmentationResult, ClusterError> {
    let n = d.n();
    check_k(k, n, 2, n.saturating_sub(1))?;
    let labels = dendrogram(d, linkage).cut(k)?;
    SegmentationResult::evaluate(d, &labels, Method::Hierarchical, crate::fingerprint(&(Method::Hierarchical, d.measure, k, linkage)))
}
