//! Silhouette widths under cosine dissimilarity.

use alloc::vec;
use alloc::vec::Vec;

use crate::ensemble::SignatureVectorSet;
use crate::error::{Error, Result};
use crate::matrix::dot;

fn cluster_sizes(assignments: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut sizes = vec![0usize; k];
    for &c in assignments {
        if c >= k {
            return Err(Error::Parameter(alloc::format!(
                "cluster id {c} outside 0..{k}"
            )));
        }
        sizes[c] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(empty));
    }
    Ok(sizes)
}

#[inline]
fn width(a: f64, b: f64) -> f64 {
    let denom = a.max(b);
    if denom <= 0.0 {
        0.0
    } else {
        ((b - a) / denom).clamp(-1.0, 1.0)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-vector silhouette widths and their mean for the unit vectors in `vs`.
///
/// Because the vectors have unit length, the mean dissimilarity from vector
/// `i` to cluster `C` is `1 − vᵢ·(Σ_C v)/|C|`; each cluster sum is formed once,
/// so the cost is O(N·k·dim) rather than O(N²·dim).
pub fn silhouette(
    vs: &SignatureVectorSet,
    assignments: &[usize],
    k: usize,
) -> Result<(Vec<f64>, f64)> {
    if assignments.len() != vs.len() {
        return Err(Error::shape(
            "silhouette",
            alloc::format!("{} assignments for {} vectors", assignments.len(), vs.len()),
        ));
    }
    if k < 2 {
        return Err(Error::Parameter(
            "silhouette needs at least 2 clusters".into(),
        ));
    }
    let sizes = cluster_sizes(assignments, k)?;
    let mut sums = vec![0.0; k * vs.dim];
    for (i, &c) in assignments.iter().enumerate() {
        for (s, v) in sums[c * vs.dim..(c + 1) * vs.dim]
            .iter_mut()
            .zip(vs.vector(i))
        {
            *s += v;
        }
    }

    let per: Vec<f64> = assignments
        .iter()
        .enumerate()
        .map(|(i, &own)| {
            if sizes[own] == 1 {
                return 0.0;
            }
            let v = vs.vector(i);
            let others = (sizes[own] - 1) as f64;
            let self_dot = dot(v, v);
            let a =
                (others - (dot(v, &sums[own * vs.dim..(own + 1) * vs.dim]) - self_dot)) / others;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| 1.0 - dot(v, &sums[c * vs.dim..(c + 1) * vs.dim]) / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            width(a.max(0.0), b.max(0.0))
        })
        .collect();
    let m = mean(&per);
    Ok((per, m))
}

/// Silhouette widths for `count` items under an arbitrary dissimilarity.
/// O(count²) evaluations of `dist`.
pub fn silhouette_with(
    count: usize,
    assignments: &[usize],
    k: usize,
    dist: impl Fn(usize, usize) -> f64,
) -> Result<(Vec<f64>, f64)> {
    if assignments.len() != count {
        return Err(Error::shape(
            "silhouette_with",
            alloc::format!("{} assignments for {count} items", assignments.len()),
        ));
    }
    if k < 2 {
        return Err(Error::Parameter(
            "silhouette needs at least 2 clusters".into(),
        ));
    }
    let sizes = cluster_sizes(assignments, k)?;
    let mut totals = vec![0.0; k];
    let per: Vec<f64> = (0..count)
        .map(|i| {
            let own = assignments[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            totals.iter_mut().for_each(|t| *t = 0.0);
            for j in (0..count).filter(|&j| j != i) {
                totals[assignments[j]] += dist(i, j);
            }
            let a = totals[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| totals[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            width(a, b)
        })
        .collect();
    let m = mean(&per);
    Ok((per, m))
}

/// Mean silhouette of the members of each cluster.
pub fn cluster_means(per_vector: &[f64], assignments: &[usize], k: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&s, &c) in per_vector.iter().zip(assignments) {
        sums[c] += s;
        counts[c] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::FactorSide;
    use crate::matrix::cosine_dissimilarity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(vectors: &[Vec<f64>]) -> SignatureVectorSet {
        SignatureVectorSet::from_vectors(1, vectors[0].len(), FactorSide::W, vectors).unwrap()
    }

    #[test]
    fn separated_identical_clusters_score_one() {
        let vs = set(&[
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 3.0],
        ]);
        let (per, mean) = silhouette(&vs, &[0, 0, 1, 1], 2).unwrap();
        assert!(per.iter().all(|&s| (s - 1.0).abs() < 1e-12));
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equidistant_vector_scores_zero() {
        // vector 0 is at distance 1 from its co-member and from the other cluster.
        let d = |i: usize, j: usize| if i == j { 0.0 } else { 1.0 };
        let (per, _) = silhouette_with(4, &[0, 0, 1, 1], 2, d).unwrap();
        assert_eq!(per[0], 0.0);
    }

    #[test]
    fn singleton_scores_zero() {
        let vs = set(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.1, 1.0]]);
        let (per, _) = silhouette(&vs, &[0, 1, 1], 2).unwrap();
        assert_eq!(per[0], 0.0);
    }

    #[test]
    fn empty_cluster_is_rejected() {
        let vs = set(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(
            silhouette(&vs, &[0, 0], 2).unwrap_err(),
            Error::EmptyCluster(1)
        );
        assert_eq!(
            silhouette_with(2, &[1, 1], 2, |_, _| 1.0).unwrap_err(),
            Error::EmptyCluster(0)
        );
    }

    #[test]
    fn fast_path_matches_pairwise_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..50 {
            let k = 2 + trial % 3;
            let count = 12;
            let vectors: Vec<Vec<f64>> = (0..count)
                .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
                .collect();
            let mut assignments: Vec<usize> = (0..count).map(|i| i % k).collect();
            for i in (1..count).rev() {
                assignments.swap(i, rng.random_range(0..=i));
            }
            let vs = set(&vectors);
            let (fast, fast_mean) = silhouette(&vs, &assignments, k).unwrap();
            let (slow, slow_mean) = silhouette_with(count, &assignments, k, |i, j| {
                cosine_dissimilarity(&vectors[i], &vectors[j]).unwrap()
            })
            .unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            assert!((fast_mean - slow_mean).abs() < 1e-12);
        }
    }

    #[test]
    fn cluster_means_average_members() {
        assert_eq!(
            cluster_means(&[1.0, 0.5, 0.0, 0.25], &[0, 0, 1, 1], 2),
            vec![0.75, 0.125]
        );
    }
}
