//! k-means over restart signature vectors under the balance constraint:
//! every cluster receives exactly one vector from every restart.

use alloc::vec;
use alloc::vec::Vec;

use super::assignment::min_cost_assignment;
use super::silhouette::{cluster_means, silhouette};
use crate::ensemble::SignatureVectorSet;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm, unit_dissimilarity};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub k: usize,
    /// Cluster id of every vector in the set, indexed like the set.
    pub assignments: Vec<usize>,
    /// Unit-normalized member means, one per cluster.
    pub centroids: Vec<Vec<f64>>,
    pub silhouette_per_vector: Vec<f64>,
    pub mean_silhouette: f64,
    /// Mean silhouette within each cluster.
    pub cluster_silhouettes: Vec<f64>,
    /// `Σᵢ ρ(vᵢ, centroid of i's cluster)`.
    pub within_cluster_dissimilarity: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ClusteringResult {
    pub fn min_cluster_silhouette(&self) -> f64 {
        self.cluster_silhouettes
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }
}

fn centroids_of(vs: &SignatureVectorSet, assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; vs.dim]; k];
    for (i, &c) in assignments.iter().enumerate() {
        for (s, v) in sums[c].iter_mut().zip(vs.vector(i)) {
            *s += v;
        }
    }
    for s in &mut sums {
        let n = norm(s);
        if n > 0.0 {
            s.iter_mut().for_each(|x| *x /= n);
        }
    }
    sums
}

/// Objective value: total cosine dissimilarity of vectors to their centroids.
pub fn within_cluster_dissimilarity(
    vs: &SignatureVectorSet,
    assignments: &[usize],
    k: usize,
) -> f64 {
    let centroids = centroids_of(vs, assignments, k);
    assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| unit_dissimilarity(vs.vector(i), &centroids[c]))
        .sum()
}

/// Optimal one-to-one matching of one restart's vectors to the centroids.
fn assign_restart(
    vs: &SignatureVectorSet,
    slot: usize,
    centroids: &[Vec<f64>],
    cost: &mut Vec<f64>,
    out: &mut [usize],
) {
    let k = vs.k;
    cost.clear();
    for v in vs.restart_vectors(slot) {
        cost.extend(centroids.iter().map(|c| unit_dissimilarity(v, c)));
    }
    out.copy_from_slice(&min_cost_assignment(cost, k));
}

/// Balanced spherical k-means.
///
/// Centroids start at the vectors of the lowest-loss restart. Each round
/// assigns every restart's `k` vectors to the `k` centroids by exact
/// minimum-cost matching, then recomputes centroids as normalized member
/// means; rounds stop when assignments repeat or after `max_rounds`.
///
/// Lloyd rounds can stall where moving a restart would also move the
/// centroids it is compared against, so converged assignments are polished
/// by exact per-restart moves on the true objective: with unit vectors the
/// total dissimilarity is `N − Σ_c ‖S_c‖` for cluster sums `S_c`, and the
/// best permutation of one restart given the others is again a matching.
/// Polishing and Lloyd rounds alternate until neither changes anything.
pub fn balanced_kmeans(
    vs: &SignatureVectorSet,
    k: usize,
    max_rounds: usize,
) -> Result<ClusteringResult> {
    if k < 2 {
        return Err(Error::Parameter("balanced k-means needs k >= 2".into()));
    }
    if vs.k != k {
        return Err(Error::Parameter(alloc::format!(
            "vector set has {} vectors per restart, asked for k = {k}",
            vs.k
        )));
    }
    if vs.is_empty() {
        return Err(Error::Degenerate("no signature vectors".into()));
    }
    let first = vs.vector(0);
    if (1..vs.len()).all(|i| unit_dissimilarity(first, vs.vector(i)) < 1e-12) {
        return Err(Error::SingleCluster);
    }

    let mut starts = vec![vs.best_slot];
    starts.extend(
        (0..vs.restarts())
            .filter(|&s| s != vs.best_slot)
            .take(EXTRA_STARTS),
    );
    let mut best: Option<Descent> = None;
    for slot in starts {
        let initial: Vec<Vec<f64>> = vs.restart_vectors(slot).map(|v| v.to_vec()).collect();
        let run = descend(vs, k, initial, max_rounds);
        let better = match &best {
            None => true,
            Some(b) => run.objective < b.objective - 1e-12 * b.objective.max(1.0),
        };
        if better {
            best = Some(run);
        }
    }
    let Descent {
        assignments,
        centroids,
        rounds,
        converged,
        objective: within,
    } = best.expect("at least one start");

    let (per, mean) = silhouette(vs, &assignments, k)?;
    let cluster_silhouettes = cluster_means(&per, &assignments, k);
    Ok(ClusteringResult {
        k,
        assignments,
        centroids,
        silhouette_per_vector: per,
        mean_silhouette: mean,
        cluster_silhouettes,
        within_cluster_dissimilarity: within,
        iterations: rounds,
        converged,
    })
}

/// Additional restarts, after the best-loss one, whose vectors seed a
/// separate descent; the lowest objective wins.
const EXTRA_STARTS: usize = 3;

struct Descent {
    assignments: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    rounds: usize,
    converged: bool,
    objective: f64,
}

fn descend(
    vs: &SignatureVectorSet,
    k: usize,
    mut centroids: Vec<Vec<f64>>,
    max_rounds: usize,
) -> Descent {
    let restarts = vs.restarts();
    let mut assignments = vec![usize::MAX; vs.len()];
    let mut cost = Vec::with_capacity(k * k);
    let mut scratch = vec![0usize; k];
    let mut rounds = 0;
    let converged;
    let max_rounds = max_rounds.max(1);
    loop {
        let mut stable = false;
        while rounds < max_rounds {
            rounds += 1;
            let mut moved = false;
            for slot in 0..restarts {
                assign_restart(vs, slot, &centroids, &mut cost, &mut scratch);
                let span = &mut assignments[slot * k..(slot + 1) * k];
                if span != scratch.as_slice() {
                    span.copy_from_slice(&scratch);
                    moved = true;
                }
            }
            centroids = centroids_of(vs, &assignments, k);
            if !moved {
                stable = true;
                break;
            }
        }
        if !stable {
            converged = false;
            break;
        }
        let mut improved = polish(vs, &mut assignments, k);
        if !improved && pair_moves_affordable(vs.restarts(), k) {
            improved = polish_pairs(vs, &mut assignments, k);
        }
        if !improved {
            converged = true;
            break;
        }
        centroids = centroids_of(vs, &assignments, k);
    }
    let objective = assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| unit_dissimilarity(vs.vector(i), &centroids[c]))
        .sum();
    Descent {
        assignments,
        centroids,
        rounds,
        converged,
        objective,
    }
}

/// Exact block moves: re-matches each restart against the cluster sums of
/// all other restarts. Returns whether any assignment changed.
fn polish(vs: &SignatureVectorSet, assignments: &mut [usize], k: usize) -> bool {
    let dim = vs.dim;
    let mut sums = vec![0.0; k * dim];
    for (i, &c) in assignments.iter().enumerate() {
        for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(vs.vector(i)) {
            *s += v;
        }
    }
    let mut any = false;
    let mut cost = vec![0.0; k * k];
    let mut candidate = vec![0.0; dim];
    for _pass in 0..64 {
        let mut moved = false;
        for slot in 0..vs.restarts() {
            let base = slot * k;
            // Remove this restart from the sums.
            for j in 0..k {
                let c = assignments[base + j];
                for (s, v) in sums[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(vs.vector(base + j))
                {
                    *s -= v;
                }
            }
            for j in 0..k {
                let v = vs.vector(base + j);
                for c in 0..k {
                    let rest = &sums[c * dim..(c + 1) * dim];
                    for ((o, r), x) in candidate.iter_mut().zip(rest).zip(v) {
                        *o = r + x;
                    }
                    // Σ_c ‖S_c‖ gains ‖rest + v‖ − ‖rest‖; only the first
                    // term depends on the choice.
                    cost[j * k + c] = -libm::sqrt(dot(&candidate, &candidate));
                }
            }
            let current: f64 = (0..k).map(|j| cost[j * k + assignments[base + j]]).sum();
            let best = min_cost_assignment(&cost, k);
            let best_cost: f64 = (0..k).map(|j| cost[j * k + best[j]]).sum();
            // Move only on a strict improvement beyond rounding noise.
            if best_cost < current - 1e-12 * current.abs().max(1.0) {
                assignments[base..base + k].copy_from_slice(&best);
                moved = true;
            }
            for j in 0..k {
                let c = assignments[base + j];
                for (s, v) in sums[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(vs.vector(base + j))
                {
                    *s += v;
                }
            }
        }
        if !moved {
            break;
        }
        any = true;
    }
    any
}

/// Pair moves cost `restarts² · k! · k³`; they run only below this budget.
const PAIR_MOVE_BUDGET: usize = 2_000_000;

fn pair_moves_affordable(restarts: usize, k: usize) -> bool {
    let factorial: usize = (1..=k)
        .try_fold(1usize, |acc, x| acc.checked_mul(x))
        .unwrap_or(usize::MAX);
    restarts
        .saturating_mul(restarts)
        .saturating_mul(factorial)
        .saturating_mul(k * k * k)
        <= PAIR_MOVE_BUDGET
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for item in 0..k {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..=p.len()).map(move |pos| {
                    let mut q = p.clone();
                    q.insert(pos, item);
                    q
                })
            })
            .collect();
    }
    out
}

/// Exact joint re-matching of two restarts against the cluster sums of all
/// others: every permutation of the first restart, with the second solved
/// as a matching. Labels are only defined up to relabeling, so with three
/// restarts this move alone reaches the global optimum.
fn polish_pairs(vs: &SignatureVectorSet, assignments: &mut [usize], k: usize) -> bool {
    let dim = vs.dim;
    let perms = permutations(k);
    let mut sums = vec![0.0; k * dim];
    let add = |sums: &mut [f64], index: usize, cluster: usize, sign: f64| {
        for (s, v) in sums[cluster * dim..(cluster + 1) * dim]
            .iter_mut()
            .zip(vs.vector(index))
        {
            *s += sign * v;
        }
    };
    for (i, &c) in assignments.iter().enumerate() {
        add(&mut sums, i, c, 1.0);
    }
    let objective =
        |sums: &[f64]| -> f64 { (0..k).map(|c| norm(&sums[c * dim..(c + 1) * dim])).sum() };

    let mut any = false;
    let mut partial = vec![0.0; k * dim];
    let mut cost = vec![0.0; k * k];
    let mut candidate = vec![0.0; dim];
    let restarts = vs.restarts();
    for first in 0..restarts {
        for second in first + 1..restarts {
            let (a, b) = (first * k, second * k);
            for j in 0..k {
                add(&mut sums, a + j, assignments[a + j], -1.0);
                add(&mut sums, b + j, assignments[b + j], -1.0);
            }
            let mut best_value = f64::NEG_INFINITY;
            let mut best_pair: Option<(usize, Vec<usize>)> = None;
            let mut current_value = 0.0;
            for (pi, perm) in perms.iter().enumerate() {
                partial.copy_from_slice(&sums);
                for (j, &c) in perm.iter().enumerate() {
                    add(&mut partial, a + j, c, 1.0);
                }
                for j in 0..k {
                    let v = vs.vector(b + j);
                    for c in 0..k {
                        for ((o, r), x) in candidate
                            .iter_mut()
                            .zip(&partial[c * dim..(c + 1) * dim])
                            .zip(v)
                        {
                            *o = r + x;
                        }
                        cost[j * k + c] = -norm(&candidate);
                    }
                }
                let matching = min_cost_assignment(&cost, k);
                let value: f64 = -(0..k).map(|j| cost[j * k + matching[j]]).sum::<f64>();
                if perm.as_slice() == &assignments[a..a + k] {
                    let mut here = partial.clone();
                    for j in 0..k {
                        add(&mut here, b + j, assignments[b + j], 1.0);
                    }
                    current_value = objective(&here);
                }
                if value > best_value {
                    best_value = value;
                    best_pair = Some((pi, matching));
                }
            }
            if best_value > current_value + 1e-12 * current_value.abs().max(1.0) {
                let (pi, matching) = best_pair.expect("k >= 1");
                assignments[a..a + k].copy_from_slice(&perms[pi]);
                assignments[b..b + k].copy_from_slice(&matching);
                any = true;
            }
            for j in 0..k {
                add(&mut sums, a + j, assignments[a + j], 1.0);
                add(&mut sums, b + j, assignments[b + j], 1.0);
            }
        }
    }
    any
}
