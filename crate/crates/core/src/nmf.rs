//! Single-run masked NMF with Lee–Seung multiplicative updates.
//!
//! Missing entries are handled by imputation: before each half-update the
//! unobserved cells of X are replaced by the current reconstruction `W·H`,
//! so the plain multiplicative rules apply unchanged and the masked loss
//! stays monotone. With a fully observed mask this is ordinary NMF.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel;
use crate::matrix::{Mask, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Stop once the loss changes by less than this fraction over one
    /// check window.
    pub relative_tolerance: f64,
    /// Added to every multiplicative-update denominator.
    pub epsilon_guard: f64,
    /// Iterations between loss evaluations.
    pub loss_check_interval: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            relative_tolerance: 1e-6,
            epsilon_guard: 1e-12,
            loss_check_interval: 10,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be at least 1".into()));
        }
        if !(self.relative_tolerance > 0.0) {
            return Err(Error::Parameter(
                "relative_tolerance must be positive".into(),
            ));
        }
        if !(self.epsilon_guard > 0.0) {
            return Err(Error::Parameter("epsilon_guard must be positive".into()));
        }
        if self.loss_check_interval == 0 {
            return Err(Error::Parameter(
                "loss_check_interval must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One factorization `X ≈ W·H` together with its masked reconstruction loss.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    /// n × k, non-negative.
    pub w: Matrix,
    /// k × m, non-negative.
    pub h: Matrix,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

fn check_rank(n: usize, m: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n.min(m) {
        return Err(Error::Parameter(format!(
            "k = {k} must satisfy 1 <= k < min(n, m) = {}",
            n.min(m)
        )));
    }
    Ok(())
}

/// Random starting factors with entries uniform on (0, 1]: W first in
/// row-major order, then H, from a ChaCha8 stream seeded with `seed`.
pub fn init_factors(n: usize, m: usize, k: usize, seed: u64) -> Result<(Matrix, Matrix)> {
    check_rank(n, m, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |_, _| 1.0 - rng.random::<f64>();
    let w = Matrix::from_fn(n, k, &mut draw);
    let h = Matrix::from_fn(k, m, &mut draw);
    Ok((w, h))
}

fn check_update_shapes(
    op: &'static str,
    x: &Matrix,
    w: &Matrix,
    h: &Matrix,
    mask: &Mask,
) -> Result<()> {
    if w.cols() != h.rows()
        || x.rows() != w.rows()
        || x.cols() != h.cols()
        || mask.shape() != x.shape()
    {
        return Err(Error::shape(
            op,
            format!(
                "X {:?}, W {:?}, H {:?}, mask {:?}",
                x.shape(),
                w.shape(),
                h.shape(),
                mask.shape()
            ),
        ));
    }
    Ok(())
}

/// Updated factor entries below this are set to exactly zero. Entries the
/// fit does not need decay geometrically under the multiplicative rules and
/// would otherwise sink into subnormal range, where arithmetic is orders of
/// magnitude slower; products of two flushed-threshold values stay normal.
pub const FLUSH_TO_ZERO: f64 = 1e-150;

fn padded(len: usize) -> usize {
    len.div_ceil(4) * 4
}

/// Working copies for the update loop, each stored in the layout its
/// products read. Row lengths are rounded up to a multiple of four with
/// zero padding, which contributes nothing to any product. `x` and `xt`
/// hold X and Xᵀ with the unobserved cells overwritten by the current
/// reconstruction; only those cells are ever recomputed.
struct Workspace {
    n: usize,
    m: usize,
    k: usize,
    np: usize,
    mp: usize,
    kp: usize,
    missing: Vec<(usize, usize)>,
    /// np × mp.
    x: Vec<f64>,
    /// m × np.
    xt: Vec<f64>,
    /// Wᵀ, kp × np (rows past k stay zero); the W update runs on this copy.
    wt: Vec<f64>,
    /// W, np × kp.
    w: Vec<f64>,
    /// H, kp × mp (rows past k stay zero).
    h: Vec<f64>,
    /// Hᵀ, m × kp.
    ht: Vec<f64>,
    /// k × kp.
    gram: Vec<f64>,
    num: Vec<f64>,
    den: Vec<f64>,
    /// W·H, n × mp.
    recon: Vec<f64>,
}

impl Workspace {
    fn new(x: &Matrix, mask: &Mask, w: &Matrix, h: &Matrix) -> Self {
        let (n, m) = x.shape();
        let k = w.cols();
        let (np, mp, kp) = (padded(n), padded(m), padded(k));
        let mut ws = Self {
            n,
            m,
            k,
            np,
            mp,
            kp,
            missing: Vec::new(),
            x: vec![0.0; np * mp],
            xt: vec![0.0; m * np],
            wt: vec![0.0; kp * np],
            w: vec![0.0; np * kp],
            h: vec![0.0; kp * mp],
            ht: vec![0.0; m * kp],
            gram: vec![0.0; k * kp],
            num: vec![0.0; k * np.max(mp)],
            den: vec![0.0; k * np.max(mp)],
            recon: vec![0.0; n * mp],
        };
        for i in 0..n {
            for j in 0..m {
                if mask.is_observed(i, j) {
                    ws.x[i * mp + j] = x.get(i, j);
                    ws.xt[j * np + i] = x.get(i, j);
                } else {
                    ws.missing.push((i, j));
                }
            }
        }
        for i in 0..n {
            for c in 0..k {
                ws.wt[c * np + i] = w.get(i, c);
            }
        }
        ws.sync_w();
        for c in 0..k {
            ws.h[c * mp..c * mp + m].copy_from_slice(h.row(c));
        }
        ws.sync_ht();
        ws
    }

    fn sync_w(&mut self) {
        transpose(&self.wt, self.np, self.n, self.kp, &mut self.w);
    }

    fn sync_ht(&mut self) {
        transpose(&self.h, self.mp, self.m, self.kp, &mut self.ht);
    }

    fn w_matrix(&self) -> Matrix {
        Matrix::from_fn(self.n, self.k, |i, c| self.wt[c * self.np + i])
    }

    fn h_matrix(&self) -> Matrix {
        Matrix::from_fn(self.k, self.m, |c, j| self.h[c * self.mp + j])
    }

    /// Overwrites the unobserved cells with the current reconstruction. With
    /// many missing cells the whole of W·H is cheaper to form than one dot
    /// product per cell; the choice depends only on the shapes.
    fn impute(&mut self) {
        if self.missing.is_empty() {
            return;
        }
        let (n, np, mp, kp) = (self.n, self.np, self.mp, self.kp);
        if self.missing.len() * (kp + 8) > n * mp * self.k / 4 {
            kernel::at_b(&self.wt, np, n, &self.h, mp, self.k, &mut self.recon);
            for &(i, j) in &self.missing {
                let v = self.recon[i * mp + j];
                self.x[i * mp + j] = v;
                self.xt[j * np + i] = v;
            }
            return;
        }
        for &(i, j) in &self.missing {
            let (a, b) = (
                &self.w[i * kp..(i + 1) * kp],
                &self.ht[j * kp..(j + 1) * kp],
            );
            let mut acc = [0.0; 4];
            for (p, q) in a.chunks_exact(4).zip(b.chunks_exact(4)) {
                for l in 0..4 {
                    acc[l] += p[l] * q[l];
                }
            }
            let v = (acc[0] + acc[2]) + (acc[1] + acc[3]);
            self.x[i * mp + j] = v;
            self.xt[j * np + i] = v;
        }
    }

    /// `W ← W ⊙ (X̃Hᵀ) ⊘ (WHHᵀ + guard)`, computed transposed; false if any
    /// entry became non-finite.
    fn w_step(&mut self, guard: f64) -> bool {
        self.impute();
        let (m, k, np, kp) = (self.m, self.k, self.np, self.kp);
        kernel::at_b(&self.ht, kp, k, &self.ht, kp, m, &mut self.gram);
        let num = &mut self.num[..k * np];
        kernel::at_b(&self.ht, kp, k, &self.xt, np, m, num);
        let den = &mut self.den[..k * np];
        kernel::at_b(&self.gram, kp, k, &self.wt, np, k, den);
        let ok = kernel::ratio_update(&mut self.wt[..k * np], num, den, guard, FLUSH_TO_ZERO);
        self.sync_w();
        ok
    }

    /// `H ← H ⊙ (WᵀX̃) ⊘ (WᵀWH + guard)`; false if any entry became
    /// non-finite.
    fn h_step(&mut self, guard: f64) -> bool {
        self.impute();
        let (n, k, mp, kp) = (self.n, self.k, self.mp, self.kp);
        kernel::at_b(&self.w, kp, k, &self.w, kp, n, &mut self.gram);
        let num = &mut self.num[..k * mp];
        kernel::at_b(&self.w, kp, k, &self.x, mp, n, num);
        let den = &mut self.den[..k * mp];
        kernel::at_b(&self.gram, kp, k, &self.h, mp, k, den);
        let ok = kernel::ratio_update(&mut self.h[..k * mp], num, den, guard, FLUSH_TO_ZERO);
        self.sync_ht();
        ok
    }

    /// Masked residual norm.
    fn loss(&mut self, x: &Matrix, mask: &Mask) -> f64 {
        let (n, m, mp) = (self.n, self.m, self.mp);
        kernel::at_b(&self.wt, self.np, n, &self.h, mp, self.k, &mut self.recon);
        let mut sum = 0.0;
        for i in 0..n {
            let (row, fit) = (x.row(i), &self.recon[i * mp..i * mp + m]);
            for j in 0..m {
                if mask.is_observed(i, j) {
                    let r = row[j] - fit[j];
                    sum += r * r;
                }
            }
        }
        libm::sqrt(sum)
    }
}

/// Copies the first `len` columns of `rows` (`count` rows, stride `src`,
/// `count` a multiple of 4) into `out` (row length `count`), four rows at a
/// time so each output line gets one contiguous store.
fn transpose(rows: &[f64], src: usize, len: usize, count: usize, out: &mut [f64]) {
    let row = |c: usize| &rows[c * src..c * src + len];
    for c in (0..count).step_by(4) {
        let quad = row(c)
            .iter()
            .zip(row(c + 1))
            .zip(row(c + 2))
            .zip(row(c + 3));
        for (line, (((&a, &b), &e), &f)) in out.chunks_exact_mut(count).zip(quad) {
            line[c..c + 4].copy_from_slice(&[a, b, e, f]);
        }
    }
}

/// `W ⊙ (X̃Hᵀ) ⊘ (WHHᵀ + guard)`.
pub fn update_w(x: &Matrix, w: &Matrix, h: &Matrix, mask: &Mask, guard: f64) -> Result<Matrix> {
    check_update_shapes("update_w", x, w, h, mask)?;
    let mut ws = Workspace::new(x, mask, w, h);
    ws.w_step(guard);
    Ok(ws.w_matrix())
}

/// `H ⊙ (WᵀX̃) ⊘ (WᵀWH + guard)`.
pub fn update_h(x: &Matrix, w: &Matrix, h: &Matrix, mask: &Mask, guard: f64) -> Result<Matrix> {
    check_update_shapes("update_h", x, w, h, mask)?;
    let mut ws = Workspace::new(x, mask, w, h);
    ws.h_step(guard);
    Ok(ws.h_matrix())
}

/// Factorizes `x` at rank `k` from the random start given by `seed`.
pub fn solve(
    x: &Matrix,
    mask: &Mask,
    k: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<FactorPair> {
    let (w, h) = init_factors(x.rows(), x.cols(), k, seed)?;
    solve_from(x, mask, w, h, seed, opts)
}

/// Runs the update loop from caller-supplied starting factors.
pub fn solve_from(
    x: &Matrix,
    mask: &Mask,
    w: Matrix,
    h: Matrix,
    seed: u64,
    opts: &SolveOptions,
) -> Result<FactorPair> {
    opts.validate()?;
    check_update_shapes("solve", x, &w, &h, mask)?;
    if !w.is_non_negative() || !h.is_non_negative() {
        return Err(Error::Parameter(
            "starting factors must be non-negative".into(),
        ));
    }
    if (0..x.rows())
        .flat_map(|i| (0..x.cols()).map(move |j| (i, j)))
        .any(|(i, j)| mask.is_observed(i, j) && x.get(i, j) < 0.0)
    {
        return Err(Error::Parameter("X has negative observed entries".into()));
    }
    if mask.observed_count() == 0 {
        return Err(Error::Degenerate("mask has no observed entries".into()));
    }

    let guard = opts.epsilon_guard;
    let mut ws = Workspace::new(x, mask, &w, &h);
    let mut previous = ws.loss(x, mask);
    let mut iterations = 0;
    let mut converged = previous == 0.0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        if !ws.w_step(guard) || !ws.h_step(guard) {
            return Err(Error::Numerical {
                iteration: iterations,
            });
        }
        if iterations % opts.loss_check_interval == 0 {
            let current = ws.loss(x, mask);
            if !current.is_finite() {
                return Err(Error::Numerical {
                    iteration: iterations,
                });
            }
            if current == 0.0 || (previous - current).abs() <= opts.relative_tolerance * previous {
                converged = true;
            }
            previous = current;
        }
    }

    let loss = ws.loss(x, mask);
    Ok(FactorPair {
        w: ws.w_matrix(),
        h: ws.h_matrix(),
        loss,
        iterations,
        converged,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{frobenius_loss, masked_frobenius_loss};
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rand::Rng::random::<f64>(&mut rng))
    }

    #[test]
    fn init_shapes_and_range() {
        let (w, h) = init_factors(3, 4, 2, 7).unwrap();
        assert_eq!(w.shape(), (3, 2));
        assert_eq!(h.shape(), (2, 4));
        assert!(w
            .as_slice()
            .iter()
            .chain(h.as_slice())
            .all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        assert_eq!(
            init_factors(3, 4, 2, 7).unwrap(),
            init_factors(3, 4, 2, 7).unwrap()
        );
        let a = init_factors(3, 4, 2, 1).unwrap();
        let b = init_factors(3, 4, 2, 2).unwrap();
        assert!(a.0 != b.0 || a.1 != b.1);
    }

    #[test]
    fn init_rejects_rank_out_of_range() {
        assert!(matches!(init_factors(3, 4, 3, 0), Err(Error::Parameter(_))));
        assert!(matches!(init_factors(3, 4, 0, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn exact_factorization_is_fixed_point() {
        let (w, h) = init_factors(5, 6, 2, 3).unwrap();
        let x = w.matmul(&h).unwrap();
        let mask = Mask::all_observed(5, 6);
        let w2 = update_w(&x, &w, &h, &mask, 1e-12).unwrap();
        let h2 = update_h(&x, &w, &h, &mask, 1e-12).unwrap();
        for (a, b) in w.as_slice().iter().zip(w2.as_slice()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        for (a, b) in h.as_slice().iter().zip(h2.as_slice()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_entries_stay_zero() {
        let x = random(4, 3, 11);
        let mask = Mask::all_observed(4, 3);
        let (mut w, mut h) = init_factors(4, 3, 2, 5).unwrap();
        w.set(1, 0, 0.0);
        h.set(0, 2, 0.0);
        assert_eq!(update_w(&x, &w, &h, &mask, 1e-12).unwrap().get(1, 0), 0.0);
        assert_eq!(update_h(&x, &w, &h, &mask, 1e-12).unwrap().get(0, 2), 0.0);
    }

    #[test]
    fn single_updates_do_not_increase_loss() {
        let x = random(4, 3, 21);
        let mask = Mask::all_observed(4, 3);
        let (w, h) = init_factors(4, 3, 2, 9).unwrap();
        let before = frobenius_loss(&x, &w, &h).unwrap();
        let w2 = update_w(&x, &w, &h, &mask, 1e-12).unwrap();
        assert!(frobenius_loss(&x, &w2, &h).unwrap() <= before);

        let x = random(5, 4, 22);
        let mask = Mask::all_observed(5, 4);
        let (w, h) = init_factors(5, 4, 3, 9).unwrap();
        let before = frobenius_loss(&x, &w, &h).unwrap();
        let h2 = update_h(&x, &w, &h, &mask, 1e-12).unwrap();
        assert!(frobenius_loss(&x, &w, &h2).unwrap() <= before);
    }

    #[test]
    fn masked_updates_do_not_increase_masked_loss() {
        let x = random(6, 7, 5);
        let observed: Vec<bool> = (0..42).map(|i| i % 4 != 1).collect();
        let mask = Mask::new(6, 7, observed).unwrap();
        let (mut w, mut h) = init_factors(6, 7, 3, 2).unwrap();
        let mut last = masked_frobenius_loss(&x, &w, &h, &mask).unwrap();
        for _ in 0..50 {
            w = update_w(&x, &w, &h, &mask, 1e-12).unwrap();
            h = update_h(&x, &w, &h, &mask, 1e-12).unwrap();
            let now = masked_frobenius_loss(&x, &w, &h, &mask).unwrap();
            assert!(now <= last * (1.0 + 1e-10));
            last = now;
        }
    }

    #[test]
    fn update_shape_error() {
        let x = random(4, 3, 1);
        let (w, h) = init_factors(4, 5, 2, 1).unwrap();
        assert!(matches!(
            update_w(&x, &w, &h, &Mask::all_observed(4, 3), 1e-12),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn recovers_planted_factorization() {
        let w = random(10, 3, 100);
        let h = random(3, 20, 101);
        let x = w.matmul(&h).unwrap();
        let fit = solve(
            &x,
            &Mask::all_observed(10, 20),
            3,
            4,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(
            fit.loss / x.frobenius_norm() < 1e-3,
            "{}",
            fit.loss / x.frobenius_norm()
        );
        assert!(fit.w.is_non_negative() && fit.h.is_non_negative());
    }

    #[test]
    fn higher_rank_fits_better() {
        let x = random(8, 9, 42);
        let mask = Mask::all_observed(8, 9);
        let opts = SolveOptions::default();
        let low = solve(&x, &mask, 1, 3, &opts).unwrap();
        let high = solve(&x, &mask, 7, 3, &opts).unwrap();
        assert!(high.loss < low.loss);
    }

    #[test]
    fn constant_matrix_is_rank_one() {
        let x = Matrix::from_fn(5, 6, |_, _| 0.7);
        let fit = solve(
            &x,
            &Mask::all_observed(5, 6),
            1,
            8,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(fit.loss / x.frobenius_norm() < 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn reported_loss_matches_masked_loss() {
        let x = random(6, 5, 77);
        let mask = Mask::new(6, 5, (0..30).map(|i| i % 7 != 3).collect()).unwrap();
        let fit = solve(&x, &mask, 2, 1, &SolveOptions::default()).unwrap();
        let direct = masked_frobenius_loss(&x, &fit.w, &fit.h, &mask).unwrap();
        assert!((fit.loss - direct).abs() <= 1e-10 * direct);
    }

    #[test]
    fn max_iterations_caps_run() {
        let x = random(6, 5, 78);
        let opts = SolveOptions {
            max_iterations: 3,
            ..SolveOptions::default()
        };
        let fit = solve(&x, &Mask::all_observed(6, 5), 2, 1, &opts).unwrap();
        assert_eq!(fit.iterations, 3);
        assert!(!fit.converged);
    }

    #[test]
    fn non_finite_iterate_reports_iteration() {
        let x = Matrix::from_rows(&[
            [1e300, 1e300, 1e300],
            [1e300, 1e300, 1e300],
            [1e300, 1e300, 1e300],
        ]);
        let w = Matrix::from_rows(&[[1e300], [1e300], [1e300]]);
        let h = Matrix::from_rows(&[[1e300, 1e300, 1e300]]);
        let err = solve_from(
            &x,
            &Mask::all_observed(3, 3),
            w,
            h,
            0,
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numerical { iteration: 1 }), "{err:?}");
    }

    #[test]
    fn rejects_negative_data_and_bad_options() {
        let x = Matrix::from_rows(&[[1.0, -1.0, 0.5], [0.2, 0.3, 0.1], [0.0, 1.0, 1.0]]);
        assert!(solve(
            &x,
            &Mask::all_observed(3, 3),
            1,
            0,
            &SolveOptions::default()
        )
        .is_err());
        let bad = SolveOptions {
            relative_tolerance: 0.0,
            ..SolveOptions::default()
        };
        let x = random(3, 3, 1);
        assert!(matches!(
            solve(&x, &Mask::all_observed(3, 3), 1, 0, &bad),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn scaling_data_scales_loss() {
        let x = random(6, 8, 5);
        let mask = Mask::all_observed(6, 8);
        let (w, h) = init_factors(6, 8, 2, 13).unwrap();
        let opts = SolveOptions {
            max_iterations: 200,
            ..SolveOptions::default()
        };
        let c: f64 = 4.0;
        let base = solve_from(&x, &mask, w.clone(), h.clone(), 0, &opts).unwrap();
        let scaled = solve_from(
            &x.scale(c),
            &mask,
            w.scale(c.sqrt()),
            h.scale(c.sqrt()),
            0,
            &opts,
        )
        .unwrap();
        assert!((scaled.loss - c * base.loss).abs() <= 1e-8 * c * base.loss);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn updates_preserve_non_negativity_and_determinism(seed in any::<u64>(), k in 1usize..4) {
            let x = random(5, 6, seed);
            let mask = Mask::all_observed(5, 6);
            let opts = SolveOptions { max_iterations: 40, ..SolveOptions::default() };
            let a = solve(&x, &mask, k, seed, &opts).unwrap();
            let b = solve(&x, &mask, k, seed, &opts).unwrap();
            prop_assert!(a.w.is_non_negative() && a.h.is_non_negative());
            prop_assert_eq!(a, b);
        }
    }
}
