//! Random-restart ensembles for a fixed rank and the signature vectors they
//! contribute to clustering.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{norm, Mask, Matrix};
use crate::nmf::{solve, FactorPair, SolveOptions};

/// Runs independent jobs `0..count` and returns their results in index order.
///
/// Implementations may schedule jobs on any number of workers; callers rely
/// only on the returned order.
pub trait Executor: Sync {
    fn map<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every job on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(job).collect()
    }
}

/// Seed of restart `index`: a SplitMix64 finalizer applied to
/// `master + (index + 1) · 0x9E3779B97F4A7C15`.
pub fn derive_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add(
        (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// All surviving restarts for one rank, in restart order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub k: usize,
    pub runs: Vec<FactorPair>,
    /// Restart index of each entry in `runs`.
    pub restart_ids: Vec<usize>,
    /// Restarts whose solve hit a non-finite value.
    pub failed: Vec<usize>,
    pub best_loss: f64,
}

impl Ensemble {
    /// Builds an ensemble from per-restart outcomes indexed by restart.
    /// Fails when more than 10% of the restarts failed.
    pub fn from_outcomes(k: usize, outcomes: Vec<Result<FactorPair>>) -> Result<Self> {
        let total = outcomes.len();
        let mut runs = Vec::with_capacity(total);
        let mut restart_ids = Vec::with_capacity(total);
        let mut failed = Vec::new();
        for (restart, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(pair) => {
                    runs.push(pair);
                    restart_ids.push(restart);
                }
                Err(Error::Numerical { iteration }) => {
                    if total == 1 {
                        return Err(Error::RestartFailed { restart, iteration });
                    }
                    failed.push(restart);
                }
                Err(other) => return Err(other),
            }
        }
        if failed.len() * 10 > total || runs.is_empty() {
            return Err(Error::Ensemble {
                failed: failed.len(),
                total,
            });
        }
        let best_loss = runs.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
        Ok(Self {
            k,
            runs,
            restart_ids,
            failed,
            best_loss,
        })
    }

    /// Position in `runs` of the lowest-loss restart (first on ties).
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, r) in self.runs.iter().enumerate() {
            if r.loss < self.runs[best].loss {
                best = i;
            }
        }
        best
    }

    pub fn best(&self) -> &FactorPair {
        &self.runs[self.best_index()]
    }
}

/// Solves `restarts` independent factorizations at rank `k`.
pub fn run_ensemble<E: Executor>(
    executor: &E,
    x: &Matrix,
    mask: &Mask,
    k: usize,
    restarts: usize,
    master_seed: u64,
    opts: &SolveOptions,
) -> Result<Ensemble> {
    if restarts < 2 {
        return Err(Error::Parameter(format!(
            "restarts = {restarts}; need at least 2"
        )));
    }
    opts.validate()?;
    // Surface parameter errors once instead of per restart.
    crate::nmf::init_factors(x.rows(), x.cols(), k, 0)?;
    let outcomes = executor.map(restarts, |i| {
        solve(x, mask, k, derive_seed(master_seed, i), opts)
    });
    Ensemble::from_outcomes(k, outcomes)
}

/// Which factor the signature vectors were taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorSide {
    /// Columns of W, one length-n attribute profile per signature.
    W,
    /// Rows of H, one length-m location profile per signature.
    H,
}

/// Unit-normalized signature vectors, `k` per surviving restart, stored
/// contiguously: vector `r * k + j` is signature `j` of restart slot `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureVectorSet {
    pub k: usize,
    pub dim: usize,
    pub side: FactorSide,
    data: Vec<f64>,
    /// Euclidean norm of each vector before normalization.
    pub scales: Vec<f64>,
    /// Restart index of each restart slot.
    pub restart_of: Vec<usize>,
    /// Slot of the lowest-loss restart.
    pub best_slot: usize,
    /// Restarts dropped because one of their signatures was all zero.
    pub dropped: Vec<usize>,
}

impl SignatureVectorSet {
    /// Builds a set from raw vectors grouped by restart (`k` consecutive
    /// vectors per restart). Vectors are normalized here.
    pub fn from_vectors(
        k: usize,
        dim: usize,
        side: FactorSide,
        vectors: &[Vec<f64>],
    ) -> Result<Self> {
        if k == 0 || dim == 0 || vectors.is_empty() || !vectors.len().is_multiple_of(k) {
            return Err(Error::shape(
                "SignatureVectorSet::from_vectors",
                format!("{} vectors for k = {k}", vectors.len()),
            ));
        }
        let mut data = Vec::with_capacity(vectors.len() * dim);
        let mut scales = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.len() != dim {
                return Err(Error::shape(
                    "SignatureVectorSet::from_vectors",
                    format!("vector of length {} in dimension {dim}", v.len()),
                ));
            }
            if v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::Parameter(
                    "signature vectors must be non-negative".into(),
                ));
            }
            let s = norm(v);
            if s == 0.0 {
                return Err(Error::Degenerate("zero signature vector".into()));
            }
            data.extend(v.iter().map(|x| x / s));
            scales.push(s);
        }
        let restarts = vectors.len() / k;
        Ok(Self {
            k,
            dim,
            side,
            data,
            scales,
            restart_of: (0..restarts).collect(),
            best_slot: 0,
            dropped: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn restarts(&self) -> usize {
        self.restart_of.len()
    }

    #[inline]
    pub fn vector(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    /// The `k` vectors of restart slot `slot`.
    pub fn restart_vectors(&self, slot: usize) -> impl Iterator<Item = &[f64]> {
        (slot * self.k..(slot + 1) * self.k).map(move |i| self.vector(i))
    }
}

/// Collects signature vectors from the factor with the smaller ambient
/// dimension: W columns when `n <= m`, otherwise H rows.
pub fn extract_signature_vectors(e: &Ensemble, n: usize, m: usize) -> Result<SignatureVectorSet> {
    if e.runs.is_empty() {
        return Err(Error::Degenerate("empty ensemble".into()));
    }
    let (side, dim) = if n <= m {
        (FactorSide::W, n)
    } else {
        (FactorSide::H, m)
    };
    let k = e.k;
    let best = e.best_index();

    let mut data = Vec::with_capacity(e.runs.len() * k * dim);
    let mut scales = Vec::with_capacity(e.runs.len() * k);
    let mut restart_of = Vec::with_capacity(e.runs.len());
    let mut dropped = Vec::new();
    let mut best_slot = None;
    let mut buf = Vec::with_capacity(dim);

    'runs: for (pos, run) in e.runs.iter().enumerate() {
        if run.w.shape() != (n, k) || run.h.shape() != (k, m) {
            return Err(Error::shape(
                "extract_signature_vectors",
                format!("run {pos} has W {:?}, H {:?}", run.w.shape(), run.h.shape()),
            ));
        }
        let start = data.len();
        let scale_start = scales.len();
        for j in 0..k {
            buf.clear();
            match side {
                FactorSide::W => buf.extend((0..n).map(|i| run.w.get(i, j))),
                FactorSide::H => buf.extend_from_slice(run.h.row(j)),
            }
            let s = norm(&buf);
            if s == 0.0 {
                data.truncate(start);
                scales.truncate(scale_start);
                dropped.push(e.restart_ids[pos]);
                continue 'runs;
            }
            data.extend(buf.iter().map(|v| v / s));
            scales.push(s);
        }
        if pos == best {
            best_slot = Some(restart_of.len());
        }
        restart_of.push(e.restart_ids[pos]);
    }

    if restart_of.is_empty() {
        return Err(Error::Degenerate(
            "every restart produced a zero signature".into(),
        ));
    }
    // The best run can only be dropped if it has a zero signature; fall back
    // to the first surviving restart.
    let best_slot = best_slot.unwrap_or(0);
    Ok(SignatureVectorSet {
        k,
        dim,
        side,
        data,
        scales,
        restart_of,
        best_slot,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
    }

    struct Reversed;

    impl Executor for Reversed {
        fn map<T, F>(&self, count: usize, job: F) -> Vec<T>
        where
            T: Send,
            F: Fn(usize) -> T + Sync + Send,
        {
            let mut out: Vec<(usize, T)> = (0..count).rev().map(|i| (i, job(i))).collect();
            out.sort_by_key(|(i, _)| *i);
            out.into_iter().map(|(_, t)| t).collect()
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 1000);
        assert_eq!(derive_seed(42, 3), seeds[3]);
        assert_ne!(derive_seed(42, 0), derive_seed(43, 0));
    }

    #[test]
    fn two_restarts_best_is_minimum() {
        let x = random(4, 4, 1);
        let e = run_ensemble(
            &Sequential,
            &x,
            &Mask::all_observed(4, 4),
            2,
            2,
            9,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(e.runs.len(), 2);
        assert_eq!(e.best_loss, e.runs[0].loss.min(e.runs[1].loss));
        assert_eq!(e.restart_ids, vec![0, 1]);
    }

    #[test]
    fn ensemble_is_deterministic_across_schedules() {
        let x = random(5, 6, 2);
        let mask = Mask::all_observed(5, 6);
        let opts = SolveOptions::default();
        let a = run_ensemble(&Sequential, &x, &mask, 2, 6, 17, &opts).unwrap();
        let b = run_ensemble(&Sequential, &x, &mask, 2, 6, 17, &opts).unwrap();
        let c = run_ensemble(&Reversed, &x, &mask, 2, 6, 17, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn planted_rank_two_is_recovered() {
        let w = random(8, 2, 3);
        let h = random(2, 12, 4);
        let x = w.matmul(&h).unwrap();
        let e = run_ensemble(
            &Sequential,
            &x,
            &Mask::all_observed(8, 12),
            2,
            50,
            5,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(e.best_loss / x.frobenius_norm() < 1e-3);
    }

    #[test]
    fn rejects_single_restart() {
        let x = random(4, 4, 1);
        assert!(matches!(
            run_ensemble(
                &Sequential,
                &x,
                &Mask::all_observed(4, 4),
                2,
                1,
                0,
                &SolveOptions::default()
            ),
            Err(Error::Parameter(_))
        ));
    }

    fn pair(loss: f64) -> FactorPair {
        FactorPair {
            w: Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
            h: Matrix::from_rows(&[[1.0, 0.0, 0.5, 0.5], [0.0, 1.0, 0.5, 0.5]]),
            loss,
            iterations: 1,
            converged: true,
            seed: 0,
        }
    }

    #[test]
    fn tolerates_up_to_ten_percent_failures() {
        let mut outcomes: Vec<Result<FactorPair>> =
            (0..10).map(|i| Ok(pair(i as f64 + 1.0))).collect();
        outcomes[4] = Err(Error::Numerical { iteration: 7 });
        let e = Ensemble::from_outcomes(2, outcomes).unwrap();
        assert_eq!(e.failed, vec![4]);
        assert_eq!(e.runs.len(), 9);
        assert_eq!(e.restart_ids[4], 5);
        assert_eq!(e.best_loss, 1.0);

        let mut outcomes: Vec<Result<FactorPair>> = (0..10).map(|_| Ok(pair(1.0))).collect();
        outcomes[1] = Err(Error::Numerical { iteration: 7 });
        outcomes[2] = Err(Error::Numerical { iteration: 9 });
        assert!(matches!(
            Ensemble::from_outcomes(2, outcomes),
            Err(Error::Ensemble {
                failed: 2,
                total: 10
            })
        ));
    }

    #[test]
    fn picks_smaller_side() {
        let e = Ensemble::from_outcomes(2, vec![Ok(pair(2.0)), Ok(pair(1.0))]).unwrap();
        let vs = extract_signature_vectors(&e, 3, 4).unwrap();
        assert_eq!(vs.side, FactorSide::W);
        assert_eq!(vs.dim, 3);
        assert_eq!(vs.len(), 4);
        assert_eq!(vs.best_slot, 1);
        for i in 0..vs.len() {
            assert!((norm(vs.vector(i)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_and_square_inputs_cluster_w() {
        for (n, m) in [(18, 14_321), (22, 102), (6, 6)] {
            let runs = vec![
                Ok(FactorPair {
                    w: Matrix::from_fn(n, 2, |i, j| (i + j + 1) as f64),
                    h: Matrix::from_fn(2, m, |i, j| ((i * j) % 3 + 1) as f64),
                    loss: 0.0,
                    iterations: 0,
                    converged: true,
                    seed: 0,
                }),
                Ok(FactorPair {
                    w: Matrix::from_fn(n, 2, |i, j| (i * j + 1) as f64),
                    h: Matrix::from_fn(2, m, |_, _| 1.0),
                    loss: 0.0,
                    iterations: 0,
                    converged: true,
                    seed: 1,
                }),
            ];
            let e = Ensemble::from_outcomes(2, runs).unwrap();
            let vs = extract_signature_vectors(&e, n, m).unwrap();
            assert_eq!(vs.side, FactorSide::W);
            assert_eq!(vs.dim, n);
        }
    }

    #[test]
    fn tall_input_clusters_h() {
        let runs = vec![Ok(pair(1.0).clone()), Ok(pair(1.0))];
        let mut e = Ensemble::from_outcomes(2, runs).unwrap();
        for r in &mut e.runs {
            r.w = r.h.transpose();
            r.h = Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]);
        }
        let vs = extract_signature_vectors(&e, 4, 3).unwrap();
        assert_eq!(vs.side, FactorSide::H);
        assert_eq!(vs.dim, 3);
    }

    #[test]
    fn zero_signature_drops_restart() {
        let mut bad = pair(0.5);
        bad.w.set(0, 1, 0.0);
        bad.w.set(1, 1, 0.0);
        bad.w.set(2, 1, 0.0);
        let e = Ensemble::from_outcomes(2, vec![Ok(pair(1.0)), Ok(bad), Ok(pair(2.0))]).unwrap();
        let vs = extract_signature_vectors(&e, 3, 4).unwrap();
        assert_eq!(vs.dropped, vec![1]);
        assert_eq!(vs.restart_of, vec![0, 2]);
        assert_eq!(vs.len(), 4);
        assert_eq!(vs.best_slot, 0);
    }
}
