//! Minimum-cost perfect matching on small square cost matrices
//! (Hungarian method with row/column potentials, O(k³)).

use alloc::vec;
use alloc::vec::Vec;

/// Returns `col_of[row]` minimizing `Σ cost[row * size + col_of[row]]`.
///
/// Rows are inserted in increasing order and columns scanned in increasing
/// order with strict improvement, so equal-cost alternatives resolve toward
/// lower column ids.
pub(crate) fn min_cost_assignment(cost: &[f64], size: usize) -> Vec<usize> {
    debug_assert_eq!(cost.len(), size * size);
    let n = size;
    // 1-based with a sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r - 1) * n + (col - 1)] - u[r] - v[col];
                if reduced < min_to[col] {
                    min_to[col] = reduced;
                    way[col] = col0;
                }
                if min_to[col] < delta {
                    delta = min_to[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            row_of_col[col0] = row_of_col[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut col_of = vec![0; n];
    for col in 1..=n {
        if row_of_col[col] > 0 {
            col_of[row_of_col[col] - 1] = col - 1;
        }
    }
    col_of
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn total(cost: &[f64], n: usize, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(r, &c)| cost[r * n + c]).sum()
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=6 {
            for _ in 0..30 {
                let cost: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
                let got = min_cost_assignment(&cost, n);
                let mut seen = got.clone();
                seen.sort_unstable();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
                let best = permutations(n)
                    .iter()
                    .map(|p| total(&cost, n, p))
                    .fold(f64::INFINITY, f64::min);
                assert!((total(&cost, n, &got) - best).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_on_diagonal_costs() {
        let cost = [0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(min_cost_assignment(&cost, 3), vec![0, 1, 2]);
    }

    #[test]
    fn ties_resolve_to_identity() {
        assert_eq!(min_cost_assignment(&[0.5; 9], 3), vec![0, 1, 2]);
    }
}
