//! Clustering and validity indices against naive reference
//! implementations.

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempseg_core::cluster::{
    calinski_harabasz, dendrogram, kmeans, silhouette_index, spectral, KMeansConfig, Linkage, Sigma, SpectralConfig,
    SpectralEmbedding,
};
use tempseg_core::metrics::adjusted_rand_index;
use tempseg_core::tsdist::{DistanceMatrix, Measure};
use tempseg_core::Exec;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.random_range(0.1..10.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    DistanceMatrix::new(Measure::Cid, d).unwrap()
}

fn euclidean(points: &[Vec<f64>]) -> DistanceMatrix {
    let n = points.len();
    let d = Array2::from_shape_fn((n, n), |(i, j)| {
        points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    });
    DistanceMatrix::new(Measure::Euclidean, d).unwrap()
}

/// Merge list `(min member A, min member B, height)` recomputed from the
/// member sets at every step.
fn naive_linkage(d: &DistanceMatrix, linkage: Linkage) -> Vec<(usize, usize, f64)> {
    let mut clusters: Vec<Vec<usize>> = (0..d.n()).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best = (0, 0, f64::INFINITY);
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let pairs: Vec<f64> =
                    clusters[a].iter().flat_map(|&i| clusters[b].iter().map(move |&j| (i, j))).map(|(i, j)| d.get(i, j)).collect();
                let v = match linkage {
                    Linkage::Average => pairs.iter().sum::<f64>() / pairs.len() as f64,
                    Linkage::Complete => pairs.iter().cloned().fold(f64::MIN, f64::max),
                    Linkage::Single => pairs.iter().cloned().fold(f64::MAX, f64::min),
                };
                // clusters stay sorted by smallest member, so (a, b) order is the tie order
                if v < best.2 {
                    best = (a, b, v);
                }
            }
        }
        let (a, b, h) = best;
        merges.push((clusters[a][0], clusters[b][0], h));
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
    }
    merges
}

#[test]
fn agglomerative_matches_naive_merges() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..60 {
        let n = if case < 20 { 8 } else { rng.random_range(3..25) };
        let d = random_matrix(&mut rng, n);
        for linkage in [Linkage::Average, Linkage::Complete, Linkage::Single] {
            let fast = dendrogram(&d, linkage);
            let slow = naive_linkage(&d, linkage);
            assert_eq!(fast.merges.len(), slow.len());
            for (m, (a, b, h)) in fast.merges.iter().zip(slow) {
                assert_eq!((m.a, m.b), (a, b), "{linkage:?} n={n}");
                assert!((m.height - h).abs() <= 1e-12 * h.max(1.0));
            }
        }
    }
}

#[test]
fn agglomerative_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let d = random_matrix(&mut rng, 40);
    assert_eq!(dendrogram(&d, Linkage::Average), dendrogram(&d, Linkage::Average));
}

fn silhouette_oracle(d: &DistanceMatrix, labels: &[usize]) -> f64 {
    let n = labels.len();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| d.get(i, j)).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        for c in (0..k).filter(|&c| c != labels[i]) {
            let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            b = b.min(other.iter().map(|&j| d.get(i, j)).sum::<f64>() / other.len() as f64);
        }
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

fn ch_oracle(d: &DistanceMatrix, labels: &[usize]) -> f64 {
    let n = labels.len();
    let k = labels.iter().max().unwrap() + 1;
    let mut all = 0.0;
    let mut w = 0.0;
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
        let mut s = 0.0;
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                s += d.get(i, j).powi(2);
            }
        }
        w += s / members.len() as f64;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            all += d.get(i, j).powi(2);
        }
    }
    let b = all / n as f64 - w;
    (n - k) as f64 / (k - 1) as f64 * b / w
}

/// Random labels with every cluster non-empty.
fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut l: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        l.swap(i, rng.random_range(0..=i));
    }
    l
}

#[test]
fn indices_match_textbook_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let n = rng.random_range(4..=50);
        let k = rng.random_range(2..n.min(8));
        let d = random_matrix(&mut rng, n);
        let labels = random_labels(&mut rng, n, k);
        let si = silhouette_index(&d, &labels).unwrap();
        assert!((si - silhouette_oracle(&d, &labels)).abs() <= 1e-12);
        let ch = calinski_harabasz(&d, &labels).unwrap();
        let want = ch_oracle(&d, &labels);
        assert!((ch - want).abs() <= 1e-9 * want.max(1.0));
    }
}

#[test]
fn pairwise_ch_equals_variance_ratio_on_euclidean_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..20 {
        let (n, k, dim) = (30, 3, 4);
        let labels = random_labels(&mut rng, n, k);
        let points: Vec<Vec<f64>> =
            labels.iter().map(|&l| (0..dim).map(|_| l as f64 * 2.0 + rng.random_range(-1.5..1.5)).collect()).collect();
        let mean: Vec<f64> = (0..dim).map(|f| points.iter().map(|p| p[f]).sum::<f64>() / n as f64).collect();
        let (mut tr_w, mut tr_b) = (0.0, 0.0);
        for c in 0..k {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            let centroid: Vec<f64> =
                (0..dim).map(|f| members.iter().map(|p| p[f]).sum::<f64>() / members.len() as f64).collect();
            for p in &members {
                tr_w += p.iter().zip(&centroid).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
            tr_b += members.len() as f64 * centroid.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        let classical = (tr_b / (k - 1) as f64) / (tr_w / (n - k) as f64);
        let pairwise = calinski_harabasz(&euclidean(&points), &labels).unwrap();
        assert!((pairwise - classical).abs() <= 1e-6 * classical, "{pairwise} vs {classical}");
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (arp, arq) = (a[r][p], a[r][q]);
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let (apr, aqr) = (a[p][r], a[q][r]);
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
                for r in 0..n {
                    let (vrp, vrq) = (v[r][p], v[r][q]);
                    v[r][p] = c * vrp - s * vrq;
                    v[r][q] = s * vrp + c * vrq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Points on a ring of radius 6 around a tight central blob.
fn ring_and_blob(rng: &mut ChaCha8Rng) -> (DistanceMatrix, Vec<usize>) {
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for i in 0..24 {
        let a = i as f64 / 24.0 * std::f64::consts::TAU;
        pts.push(vec![6.0 * a.cos() + rng.random_range(-0.2..0.2), 6.0 * a.sin() + rng.random_range(-0.2..0.2)]);
        truth.push(0);
    }
    for _ in 0..16 {
        pts.push(vec![rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)]);
        truth.push(1);
    }
    (euclidean(&pts), truth)
}

#[test]
fn spectral_embedding_matches_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let (d, _) = ring_and_blob(&mut rng);
    let n = d.n();
    let k = 2;
    let sigma = {
        let mut v: Vec<f64> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| d.get(i, j)).collect();
        v.sort_by(f64::total_cmp);
        (v[v.len() / 2 - 1] + v[v.len() / 2]) / 2.0
    };
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { (-d.get(i, j).powi(2) / (2.0 * sigma * sigma)).exp() }).collect())
        .collect();
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let l: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[i][j] / (deg[i] * deg[j]).sqrt()).collect()).collect();
    let (vals, vecs) = jacobi_eigen(l);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| vals[y].total_cmp(&vals[x]));
    assert!(vals[order[k - 1]] - vals[order[k]] > 1e-6, "top-k subspace is well separated");

    let emb = SpectralEmbedding::new(&d, Sigma::Median).unwrap();
    assert!((emb.sigma - sigma).abs() < 1e-12);
    let ours = emb.rows(k);
    let theirs = Array2::from_shape_fn((n, k), |(i, c)| vecs[i][order[c]]);
    let unit = |m: &Array2<f64>| {
        let mut m = m.clone();
        for mut r in m.rows_mut() {
            let nr = r.dot(&r).sqrt();
            r.mapv_inplace(|v| v / nr);
        }
        m
    };
    let theirs = unit(&theirs);
    // row-normalised embeddings agree up to an orthogonal change of basis,
    // so their Gram matrices coincide
    let g1 = ours.dot(&ours.t());
    let g2 = theirs.dot(&theirs.t());
    for (x, y) in g1.iter().zip(g2.iter()) {
        assert!((x - y).abs() < 1e-8);
    }
    let cfg = SpectralConfig::default();
    let via_oracle = kmeans(&theirs, k, &cfg.kmeans, Exec::Sequential).unwrap();
    let lib = spectral(&d, k, &cfg, Exec::Sequential).unwrap();
    assert_eq!(adjusted_rand_index(&lib.labels, &via_oracle.labels), 1.0);
}

#[test]
fn kmeans_restarts_match_across_policies_and_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let pts = Array2::from_shape_fn((80, 3), |_| rng.random_range(-3.0..3.0));
    let cfg = KMeansConfig::default();
    let a = kmeans(&pts, 4, &cfg, Exec::Sequential).unwrap();
    let b = kmeans(&pts, 4, &cfg, Exec::Parallel).unwrap();
    let c = kmeans(&pts, 4, &cfg, Exec::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(b, c);
    // Lloyd fixed point: each point sits with its nearest centroid
    for (i, row) in pts.rows().into_iter().enumerate() {
        let dist = |c: usize| a.centroids.row(c).iter().zip(row.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        assert!((0..4).all(|c| dist(a.labels[i]) <= dist(c) + 1e-12));
    }
}

proptest! {
    #[test]
    fn indices_are_permutation_invariant_and_scale_as_expected(
        seed in 0u64..1000,
        n in 6usize..30,
        k in 2usize..5,
        c in 0.01f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_matrix(&mut rng, n);
        let labels = random_labels(&mut rng, n, k);
        let perm: Vec<usize> = labels.iter().map(|l| (l + 1) % k).collect();
        let si = silhouette_index(&d, &labels).unwrap();
        let ch = calinski_harabasz(&d, &labels).unwrap();
        prop_assert_eq!(si, silhouette_index(&d, &perm).unwrap());
        prop_assert!((ch - calinski_harabasz(&d, &perm).unwrap()).abs() <= 1e-12 * ch.abs().max(1.0));
        let scaled = d.scaled(c);
        prop_assert!((silhouette_index(&scaled, &labels).unwrap() - si).abs() <= 1e-12);
        // CH is a ratio of squared-distance sums
        prop_assert!((calinski_harabasz(&scaled, &labels).unwrap() - ch).abs() <= 1e-9 * ch.abs().max(1.0));
        prop_assert!((-1.0..=1.0).contains(&si));
    }

    #[test]
    fn spectral_partition_ignores_distance_scale(seed in 0u64..50, c in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, _) = ring_and_blob(&mut rng);
        let cfg = SpectralConfig::default();
        let a = spectral(&d, 3, &cfg, Exec::Sequential).unwrap();
        let b = spectral(&d.scaled(c), 3, &cfg, Exec::Sequential).unwrap();
        prop_assert_eq!(adjusted_rand_index(&a.labels, &b.labels), 1.0);
    }
}
