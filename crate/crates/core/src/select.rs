//! Sweeping the number of signatures and choosing among the candidates.

use alloc::format;
use alloc::vec::Vec;

use crate::cluster::{balanced_kmeans, ClusteringResult};
use crate::ensemble::{extract_signature_vectors, run_ensemble, Executor, SignatureVectorSet};
use crate::error::{Error, Result};
use crate::matrix::{masked_norm, Mask, Matrix};
use crate::nmf::SolveOptions;

/// Per-k summary used by the selection rule.
#[derive(Debug, Clone, PartialEq)]
pub struct KDiagnostics {
    pub k: usize,
    pub best_loss: f64,
    /// `best_loss / ‖X‖_F` over observed entries.
    pub normalized_loss: f64,
    pub mean_silhouette: f64,
    /// Lowest per-cluster mean silhouette.
    pub min_cluster_silhouette: f64,
    /// Restarts lost to numerical failure or zero signatures.
    pub dropped_restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionRule {
    pub silhouette_threshold: f64,
    pub k_min: usize,
    pub k_max: usize,
}

impl SelectionRule {
    pub const DEFAULT_THRESHOLD: f64 = 0.25;

    /// Default range `[2, min(n, m, 10)]`, with the upper end held below
    /// `min(n, m)` as every factorization rank must be.
    pub fn for_shape(n: usize, m: usize) -> Self {
        Self {
            silhouette_threshold: Self::DEFAULT_THRESHOLD,
            k_min: 2,
            k_max: n.min(m).saturating_sub(1).min(10),
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.k_min < 2 {
            return Err(Error::Parameter(format!(
                "k_min = {} must be at least 2",
                self.k_min
            )));
        }
        if self.k_max < self.k_min {
            return Err(Error::Parameter(format!(
                "empty range [{}, {}]",
                self.k_min, self.k_max
            )));
        }
        if self.k_max >= n.min(m) {
            return Err(Error::Parameter(format!(
                "k_max = {} must be below min(n, m) = {}",
                self.k_max,
                n.min(m)
            )));
        }
        if !self.silhouette_threshold.is_finite() {
            return Err(Error::Parameter(
                "silhouette threshold must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the sweep learned about one k, kept for reporting the chosen one.
#[derive(Debug, Clone, PartialEq)]
pub struct KOutcome {
    pub diagnostics: KDiagnostics,
    pub vectors: SignatureVectorSet,
    pub clustering: ClusteringResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    /// Successful ks in increasing order.
    pub outcomes: Vec<KOutcome>,
    /// ks that failed, with the reason.
    pub failures: Vec<(usize, Error)>,
}

impl Sweep {
    pub fn diagnostics(&self) -> Vec<KDiagnostics> {
        self.outcomes
            .iter()
            .map(|o| o.diagnostics.clone())
            .collect()
    }

    pub fn outcome(&self, k: usize) -> Option<&KOutcome> {
        self.outcomes.iter().find(|o| o.diagnostics.k == k)
    }
}

/// Upper bound on balanced k-means rounds inside the sweep.
pub const CLUSTER_ROUNDS: usize = 1_000;

/// Ensemble, signature extraction and clustering for a single k.
pub fn analyze_k<E: Executor>(
    executor: &E,
    x: &Matrix,
    mask: &Mask,
    k: usize,
    restarts: usize,
    master_seed: u64,
    opts: &SolveOptions,
) -> Result<KOutcome> {
    let ensemble = run_ensemble(executor, x, mask, k, restarts, master_seed, opts)?;
    let vectors = extract_signature_vectors(&ensemble, x.rows(), x.cols())?;
    let clustering = balanced_kmeans(&vectors, k, CLUSTER_ROUNDS)?;
    let scale = masked_norm(x, mask);
    let diagnostics = KDiagnostics {
        k,
        best_loss: ensemble.best_loss,
        normalized_loss: if scale > 0.0 {
            ensemble.best_loss / scale
        } else {
            0.0
        },
        mean_silhouette: clustering.mean_silhouette,
        min_cluster_silhouette: clustering.min_cluster_silhouette(),
        dropped_restarts: ensemble.failed.len() + vectors.dropped.len(),
    };
    Ok(KOutcome {
        diagnostics,
        vectors,
        clustering,
    })
}

/// Runs the full per-k pipeline for every k in the rule's range.
///
/// Each k draws its restart seeds from `derive_seed(!master_seed, k)`, so
/// changing the range leaves the remaining ks unchanged.
pub fn sweep<E: Executor>(
    executor: &E,
    x: &Matrix,
    mask: &Mask,
    rule: &SelectionRule,
    restarts: usize,
    master_seed: u64,
    opts: &SolveOptions,
) -> Result<Sweep> {
    rule.validate(x.rows(), x.cols())?;
    opts.validate()?;
    if restarts < 2 {
        return Err(Error::Parameter(format!(
            "restarts = {restarts}; need at least 2"
        )));
    }
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for k in rule.k_min..=rule.k_max {
        let seed = crate::ensemble::derive_seed(!master_seed, k);
        match analyze_k(executor, x, mask, k, restarts, seed, opts) {
            Ok(outcome) => outcomes.push(outcome),
            Err(err) => failures.push((k, err)),
        }
    }
    if outcomes.is_empty() {
        return Err(Error::SweepFailed);
    }
    Ok(Sweep { outcomes, failures })
}

/// The selected number of signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub k: usize,
    /// False when no k reached the silhouette threshold and the choice fell
    /// back to the best silhouette.
    pub confident: bool,
}

/// Largest k whose worst cluster still reaches the silhouette threshold and
/// whose normalized loss does not exceed that of k − 1 (within 1e-9);
/// without any such k, the k with the highest mean silhouette, flagged
/// low-confidence.
///
/// The threshold applies to the lowest per-cluster silhouette rather than
/// the overall mean. One too many signatures typically leaves k − 1 tight
/// clusters and one incoherent one, which the mean averages away.
pub fn select_optimal_k(diags: &[KDiagnostics], rule: &SelectionRule) -> Result<Selection> {
    if diags.is_empty() {
        return Err(Error::Parameter("no diagnostics to select from".into()));
    }
    let mut sorted: Vec<&KDiagnostics> = diags.iter().collect();
    sorted.sort_by_key(|d| d.k);

    let mut passing = sorted.iter().enumerate().filter(|(pos, d)| {
        let loss_ok = match pos.checked_sub(1).map(|p| sorted[p]) {
            Some(prev) if prev.k + 1 == d.k => d.normalized_loss <= prev.normalized_loss + 1e-9,
            _ => true,
        };
        d.min_cluster_silhouette >= rule.silhouette_threshold && loss_ok
    });
    if let Some((_, d)) = passing.next_back() {
        return Ok(Selection {
            k: d.k,
            confident: true,
        });
    }
    let mut best = sorted[0];
    for d in &sorted[1..] {
        if d.mean_silhouette > best.mean_silhouette {
            best = d;
        }
    }
    Ok(Selection {
        k: best.k,
        confident: false,
    })
}
