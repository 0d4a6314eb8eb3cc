use super::{check_labels, cluster_sizes, ClusterError};
use crate::tsdist::DistanceMatrix;

pub(crate) const ZERO_WITHIN: &str = "within-cluster dispersion is zero";

/// Per-point silhouette values. Members of singleton clusters score 0, as
/// do points whose `a` and `b` are both zero.
pub fn silhouette_samples(d: &DistanceMatrix, labels: &[usize]) -> Result<Vec<f64>, ClusterError> {
    let n = d.n();
    let k = check_labels(labels, n)?;
    if k < 2 {
        return Err(ClusterError::UndefinedIndex("silhouette needs at least two clusters"));
    }
    let sizes = cluster_sizes(labels, k);
    let mut sums = vec![0.0; k];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            sums[labels[j]] += d.get(i, j);
        }
        let own = labels[i];
        if sizes[own] == 1 {
            out.push(0.0);
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        out.push(if m == 0.0 { 0.0 } else { (b - a) / m });
    }
    Ok(out)
}

pub fn silhouette_index(d: &DistanceMatrix, labels: &[usize]) -> Result<f64, ClusterError> {
    let s = silhouette_samples(d, labels)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Calinski-Harabasz from pairwise distances:
/// `W = sum_C (1/|C|) sum_{i<j in C} d^2`, `B = (1/N) sum_{i<j} d^2 - W`,
/// `CH = (N - k) / (k - 1) * B / W`.
pub fn calinski_harabasz(d: &DistanceMatrix, labels: &[usize]) -> Result<f64, ClusterError> {
    let n = d.n();
    let k = check_labels(labels, n)?;
    if k < 2 {
        return Err(ClusterError::UndefinedIndex("Calinski-Harabasz needs k >= 2"));
    }
    if k >= n {
        return Err(ClusterError::UndefinedIndex("Calinski-Harabasz needs k < n"));
    }
    let sizes = cluster_sizes(labels, k);
    let mut within = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let sq = d.get(i, j) * d.get(i, j);
            total += sq;
            if labels[i] == labels[j] {
                within[labels[i]] += sq;
            }
        }
    }
    let w: f64 = within.iter().zip(&sizes).map(|(s, &c)| s / c as f64).sum();
    if w == 0.0 {
        return Err(ClusterError::UndefinedIndex(ZERO_WITHIN));
    }
    let b = total / n as f64 - w;
    Ok((n - k) as f64 / (k - 1) as f64 * b / w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsdist::Measure;
    use ndarray::Array2;

    fn line(points: &[f64]) -> DistanceMatrix {
        let n = points.len();
        let d = Array2::from_shape_fn((n, n), |(i, j)| (points[i] - points[j]).abs());
        DistanceMatrix::new(Measure::Euclidean, d).unwrap()
    }

    #[test]
    fn separated_blobs_score_high() {
        let d = line(&[0.0, 0.1, 0.2, 100.0, 100.1, 100.2]);
        let labels = [0, 0, 0, 1, 1, 1];
        assert!(silhouette_index(&d, &labels).unwrap() > 0.99);
        assert!(calinski_harabasz(&d, &labels).unwrap() > 1e5);
    }

    #[test]
    fn identical_points_score_zero() {
        let d = line(&[3.0; 4]);
        assert_eq!(silhouette_index(&d, &[0, 0, 1, 1]).unwrap(), 0.0);
        assert!(calinski_harabasz(&d, &[0, 0, 1, 1]).is_err());
    }

    #[test]
    fn singletons_contribute_zero() {
        let d = line(&[0.0, 1.0, 5.0]);
        let s = silhouette_samples(&d, &[0, 0, 1]).unwrap();
        assert_eq!(s[2], 0.0);
        // a = 1, b = 5 and 4
        assert_eq!(s[0], (5.0 - 1.0) / 5.0);
        assert_eq!(s[1], (4.0 - 1.0) / 4.0);
    }

    #[test]
    fn undefined_cases() {
        let d = line(&[0.0, 1.0, 2.0]);
        assert!(matches!(silhouette_index(&d, &[0, 0, 0]), Err(ClusterError::UndefinedIndex(_))));
        assert!(matches!(calinski_harabasz(&d, &[0, 0, 0]), Err(ClusterError::UndefinedIndex(_))));
        assert!(matches!(calinski_harabasz(&d, &[0, 1, 2]), Err(ClusterError::UndefinedIndex(_))));
        assert!(matches!(silhouette_index(&d, &[0, 2, 2]), Err(ClusterError::Labels(_))));
    }
}
