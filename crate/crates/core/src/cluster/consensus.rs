//! Consensus factors from a balanced clustering.
//!
//! Each cluster's signature is the elementwise median of its unit member
//! vectors, renormalized and scaled by the median pre-normalization norm of
//! the members. The complementary factor is then refit by non-negative least
//! squares against the observed entries of X. Column `c` of W and row `c` of
//! H correspond to cluster `c`.

use alloc::vec;
use alloc::vec::Vec;

use super::kmeans::ClusteringResult;
use crate::ensemble::{FactorSide, SignatureVectorSet};
use crate::error::{Error, Result};
use crate::matrix::{norm, unit_dissimilarity, Mask, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusSignatures {
    /// n × k.
    pub w: Matrix,
    /// k × m.
    pub h: Matrix,
    /// Mean cosine dissimilarity of each cluster's members to its centroid.
    pub within_cluster_spread: Vec<f64>,
    /// Factor the clustered signatures came from; the other one is refit.
    pub side: FactorSide,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Minimizes `‖A·x − b‖²` over `x ≥ 0` given the normal equations
/// `gram = AᵀA` (row-major `k × k`) and `rhs = Aᵀb`, by cyclic coordinate
/// descent. Coordinates with a zero diagonal are pinned at zero.
pub fn nnls(gram: &[f64], rhs: &[f64], x: &mut [f64]) {
    let k = rhs.len();
    debug_assert_eq!(gram.len(), k * k);
    debug_assert_eq!(x.len(), k);
    x.iter_mut().for_each(|v| *v = 0.0);
    for _ in 0..10_000 {
        let mut largest_step = 0.0f64;
        let mut largest_value = 0.0f64;
        for c in 0..k {
            let diag = gram[c * k + c];
            if diag <= 0.0 {
                x[c] = 0.0;
                continue;
            }
            let grad: f64 = (0..k).map(|d| gram[c * k + d] * x[d]).sum::<f64>() - rhs[c];
            let next = (x[c] - grad / diag).max(0.0);
            largest_step = largest_step.max((next - x[c]).abs());
            largest_value = largest_value.max(next.abs());
            x[c] = next;
        }
        if largest_step <= 1e-15 * largest_value.max(1e-300) {
            break;
        }
    }
}

/// Builds consensus factors for the clustering `cr` of `vs`, refitting the
/// complementary factor against `x` on the entries observed in `mask`.
pub fn consensus(
    x: &Matrix,
    mask: &Mask,
    vs: &SignatureVectorSet,
    cr: &ClusteringResult,
) -> Result<ConsensusSignatures> {
    let k = cr.k;
    let (n, m) = x.shape();
    if mask.shape() != x.shape() {
        return Err(Error::shape("consensus", "mask shape differs from X"));
    }
    let expected_dim = match vs.side {
        FactorSide::W => n,
        FactorSide::H => m,
    };
    if vs.dim != expected_dim || cr.assignments.len() != vs.len() || vs.k != k {
        return Err(Error::shape(
            "consensus",
            alloc::format!("vectors of dimension {} for X {:?}", vs.dim, x.shape()),
        ));
    }

    let mut signatures = Vec::with_capacity(k);
    let mut spread = Vec::with_capacity(k);
    let mut column = Vec::new();
    for c in 0..k {
        let members: Vec<usize> = cr.members(c).collect();
        if members.is_empty() {
            return Err(Error::EmptyCluster(c));
        }
        let mut direction: Vec<f64> = (0..vs.dim)
            .map(|d| {
                column.clear();
                column.extend(members.iter().map(|&i| vs.vector(i)[d]));
                median(&mut column)
            })
            .collect();
        let length = norm(&direction);
        if length == 0.0 {
            // Medians can all vanish for very sparse members; use the centroid.
            direction.copy_from_slice(&cr.centroids[c]);
        } else {
            direction.iter_mut().for_each(|v| *v /= length);
        }
        let mut member_scales: Vec<f64> = members.iter().map(|&i| vs.scales[i]).collect();
        let scale = median(&mut member_scales);
        direction.iter_mut().for_each(|v| *v *= scale);
        signatures.push(direction);

        let centroid = &cr.centroids[c];
        spread.push(
            members
                .iter()
                .map(|&i| unit_dissimilarity(vs.vector(i), centroid))
                .sum::<f64>()
                / members.len() as f64,
        );
    }

    let (w, h) = match vs.side {
        FactorSide::W => {
            let w = Matrix::from_fn(n, k, |i, c| signatures[c][i]);
            let h = refit_h(x, mask, &w);
            (w, h)
        }
        FactorSide::H => {
            let h = Matrix::from_fn(k, m, |c, j| signatures[c][j]);
            let w = refit_w(x, mask, &h);
            (w, h)
        }
    };
    if !w.all_finite() || !h.all_finite() {
        return Err(Error::Numerical { iteration: 0 });
    }
    Ok(ConsensusSignatures {
        w,
        h,
        within_cluster_spread: spread,
        side: vs.side,
    })
}

/// Column-by-column NNLS for H with W fixed.
fn refit_h(x: &Matrix, mask: &Mask, w: &Matrix) -> Matrix {
    let (n, m) = x.shape();
    let k = w.cols();
    let mut h = Matrix::zeros(k, m);
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut sol = vec![0.0; k];
    for j in 0..m {
        gram.iter_mut().for_each(|g| *g = 0.0);
        rhs.iter_mut().for_each(|r| *r = 0.0);
        for i in (0..n).filter(|&i| mask.is_observed(i, j)) {
            let wi = w.row(i);
            let xij = x.get(i, j);
            for a in 0..k {
                rhs[a] += wi[a] * xij;
                for b in 0..k {
                    gram[a * k + b] += wi[a] * wi[b];
                }
            }
        }
        nnls(&gram, &rhs, &mut sol);
        for (c, &v) in sol.iter().enumerate() {
            h.set(c, j, v);
        }
    }
    h
}

/// Row-by-row NNLS for W with H fixed.
fn refit_w(x: &Matrix, mask: &Mask, h: &Matrix) -> Matrix {
    let (n, m) = x.shape();
    let k = h.rows();
    let mut w = Matrix::zeros(n, k);
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut sol = vec![0.0; k];
    for i in 0..n {
        gram.iter_mut().for_each(|g| *g = 0.0);
        rhs.iter_mut().for_each(|r| *r = 0.0);
        for j in (0..m).filter(|&j| mask.is_observed(i, j)) {
            let xij = x.get(i, j);
            for a in 0..k {
                let ha = h.get(a, j);
                rhs[a] += ha * xij;
                for b in 0..k {
                    gram[a * k + b] += ha * h.get(b, j);
                }
            }
        }
        nnls(&gram, &rhs, &mut sol);
        for (c, &v) in sol.iter().enumerate() {
            w.set(i, c, v);
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::balanced_kmeans;
    use crate::ensemble::{extract_signature_vectors, Ensemble};
    use crate::nmf::{solve, SolveOptions};

    #[test]
    fn median_handles_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn nnls_matches_unconstrained_when_interior() {
        // A = I scaled, b positive: solution b / 2.
        let gram = [4.0, 0.0, 0.0, 4.0];
        let rhs = [2.0, 6.0];
        let mut x = [0.0; 2];
        nnls(&gram, &rhs, &mut x);
        assert!((x[0] - 0.5).abs() < 1e-14 && (x[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn nnls_clips_at_zero() {
        // Unconstrained optimum (1, -1); constrained optimum puts x1 = 0.
        // A = [[1, 1], [0, 1]], b = [0, -1].
        let gram = [1.0, 1.0, 1.0, 2.0];
        let rhs = [0.0, -1.0];
        let mut x = [9.0; 2];
        nnls(&gram, &rhs, &mut x);
        assert_eq!(x, [0.0, 0.0]);

        // A = I, b = (2, -3).
        let mut x = [0.0; 2];
        nnls(&[1.0, 0.0, 0.0, 1.0], &[2.0, -3.0], &mut x);
        assert_eq!(x, [2.0, 0.0]);
    }

    #[test]
    fn replicated_restart_reproduces_its_factors() {
        let x = Matrix::from_fn(4, 7, |i, j| ((i * 3 + j * 5) % 7) as f64 / 7.0 + 0.1);
        let mask = Mask::all_observed(4, 7);
        let run = solve(&x, &mask, 2, 3, &SolveOptions::default()).unwrap();
        let e = Ensemble::from_outcomes(2, (0..5).map(|_| Ok(run.clone())).collect()).unwrap();
        let vs = extract_signature_vectors(&e, 4, 7).unwrap();
        let cr = balanced_kmeans(&vs, 2, 50).unwrap();
        let cs = consensus(&x, &mask, &vs, &cr).unwrap();
        assert!(cs.within_cluster_spread.iter().all(|&s| s.abs() < 1e-12));
        // Cluster ids follow the best restart's column order.
        for c in 0..2 {
            for i in 0..4 {
                let a = cs.w.get(i, c);
                let b = run.w.get(i, c);
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
        // The refit H is the exact NNLS optimum for W, so it fits at least
        // as well as the run's own H.
        let refit = crate::matrix::frobenius_loss(&x, &cs.w, &cs.h).unwrap();
        assert!(refit <= run.loss * (1.0 + 1e-9));
    }

    #[test]
    fn tall_data_refits_w() {
        let x = Matrix::from_fn(7, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 / 7.0 + 0.1);
        let mask = Mask::all_observed(7, 4);
        let opts = SolveOptions::default();
        let runs = (0..4).map(|s| solve(&x, &mask, 2, s, &opts)).collect();
        let e = Ensemble::from_outcomes(2, runs).unwrap();
        let vs = extract_signature_vectors(&e, 7, 4).unwrap();
        assert_eq!(vs.side, FactorSide::H);
        let cr = balanced_kmeans(&vs, 2, 50).unwrap();
        let cs = consensus(&x, &mask, &vs, &cr).unwrap();
        assert_eq!(cs.w.shape(), (7, 2));
        assert_eq!(cs.h.shape(), (2, 4));
        assert!(cs.w.is_non_negative() && cs.h.is_non_negative());
    }
}
