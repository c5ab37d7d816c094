//! Load, preprocess, factorize and pick k.

use nmfk_core::{
    analyze_k, consensus, derive_seed, preprocess, select_optimal_k, sweep, to_matrix,
    ConsensusSignatures, Dataset, Error as CoreError, Executor, KOutcome, Mask, Matrix,
    PreprocessReport, Selection, SelectionRule,
};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::table::load_table;

/// Preprocessed data ready for factorization.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Scaled values with the transforms needed to invert them.
    pub dataset: Dataset,
    pub report: PreprocessReport,
    pub x: Matrix,
    pub mask: Mask,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let table = load_table(&cfg.input, &cfg.load)?;
    let ingest = |err: CoreError| CliError::Ingest {
        path: cfg.input.clone(),
        message: err.to_string(),
    };
    let (dataset, mut report) = preprocess(&table.dataset, &cfg.log_mode).map_err(|e| match e {
        CoreError::Parameter(msg) => CliError::Config(msg),
        other => ingest(other),
    })?;
    let mut dropped = table.dropped;
    dropped.append(&mut report.dropped);
    report.dropped = dropped;
    let (x, mask) = to_matrix(&dataset).map_err(ingest)?;
    Ok(Prepared {
        dataset,
        report,
        x,
        mask,
    })
}

/// Everything the reports need.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub prepared: Prepared,
    /// Per-k results in increasing k; a single entry for a fixed-k run.
    pub outcomes: Vec<KOutcome>,
    /// ks whose analysis failed, with the reason.
    pub failures: Vec<(usize, CoreError)>,
    /// Present for sweeps.
    pub selection: Option<(Selection, SelectionRule)>,
    pub chosen: usize,
    pub consensus: ConsensusSignatures,
}

impl Analysis {
    pub fn chosen_outcome(&self) -> &KOutcome {
        self.outcomes
            .iter()
            .find(|o| o.diagnostics.k == self.chosen)
            .expect("chosen k has an outcome")
    }
}

fn rule_for(cfg: &RunConfig, x: &Matrix) -> Result<SelectionRule> {
    let mut rule = SelectionRule::for_shape(x.rows(), x.cols());
    rule.silhouette_threshold = cfg.silhouette_threshold;
    rule.k_min = cfg.k_min.unwrap_or(rule.k_min);
    rule.k_max = cfg.k_max.unwrap_or(rule.k_max);
    rule.validate(x.rows(), x.cols())
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(rule)
}

/// Sweeps the configured k range and reports on the selected k.
pub fn run_sweep<E: Executor>(
    cfg: &RunConfig,
    executor: &E,
    mut progress: impl FnMut(&str),
) -> Result<Analysis> {
    let prepared = prepare(cfg)?;
    let (x, mask) = (&prepared.x, &prepared.mask);
    let rule = rule_for(cfg, x)?;
    progress(&format!(
        "{} attributes x {} locations, {} missing; k = {}..={}, {} restarts",
        x.rows(),
        x.cols(),
        mask.missing_count(),
        rule.k_min,
        rule.k_max,
        cfg.restarts
    ));
    let result = sweep(
        executor,
        x,
        mask,
        &rule,
        cfg.restarts,
        cfg.seed,
        &cfg.solver,
    )
    .map_err(CliError::from_analysis)?;
    for o in &result.outcomes {
        let d = &o.diagnostics;
        progress(&format!(
            "k = {}: normalized loss {:.6}, mean silhouette {:.4}, min cluster silhouette {:.4}",
            d.k, d.normalized_loss, d.mean_silhouette, d.min_cluster_silhouette
        ));
    }
    for (k, err) in &result.failures {
        progress(&format!("k = {k} failed: {err}"));
    }
    let selection =
        select_optimal_k(&result.diagnostics(), &rule).map_err(CliError::from_analysis)?;
    progress(&format!(
        "selected k = {}{}",
        selection.k,
        if selection.confident {
            ""
        } else {
            " (low confidence)"
        }
    ));
    let chosen = result
        .outcome(selection.k)
        .expect("selected k was analyzed");
    let consensus =
        consensus(x, mask, &chosen.vectors, &chosen.clustering).map_err(CliError::from_analysis)?;
    Ok(Analysis {
        chosen: selection.k,
        consensus,
        outcomes: result.outcomes,
        failures: result.failures,
        selection: Some((selection, rule)),
        prepared,
    })
}

/// Analyzes one fixed k. Restart seeds match those a sweep uses for the
/// same k and master seed.
pub fn run_fixed<E: Executor>(
    cfg: &RunConfig,
    executor: &E,
    mut progress: impl FnMut(&str),
) -> Result<Analysis> {
    let k = cfg
        .k
        .ok_or_else(|| CliError::Config("run needs --k".into()))?;
    let prepared = prepare(cfg)?;
    let (x, mask) = (&prepared.x, &prepared.mask);
    if k < 2 || k >= x.rows().min(x.cols()) {
        return Err(CliError::Config(format!(
            "k = {k} must satisfy 2 <= k < min(attributes, locations) = {}",
            x.rows().min(x.cols())
        )));
    }
    progress(&format!(
        "{} attributes x {} locations, {} missing; k = {k}, {} restarts",
        x.rows(),
        x.cols(),
        mask.missing_count(),
        cfg.restarts
    ));
    let seed = derive_seed(!cfg.seed, k);
    let outcome = analyze_k(executor, x, mask, k, cfg.restarts, seed, &cfg.solver)
        .map_err(CliError::from_analysis)?;
    let consensus = consensus(x, mask, &outcome.vectors, &outcome.clustering)
        .map_err(CliError::from_analysis)?;
    Ok(Analysis {
        chosen: k,
        consensus,
        outcomes: vec![outcome],
        failures: Vec::new(),
        selection: None,
        prepared,
    })
}
