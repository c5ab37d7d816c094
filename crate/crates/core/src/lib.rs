//! Core algorithms for extracting latent signatures from attribute-by-location
//! matrices with NMFk: masked non-negative matrix factorization solved from
//! many random restarts, balanced cosine k-means over the restarts' signature
//! vectors, silhouette analysis, and automatic selection of the number of
//! signatures.
//!
//! The crate needs only `alloc`. File formats, the command line and the
//! thread pool live in the `nmfk` companion crate, which plugs into this one
//! through [`ensemble::Executor`].

#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cluster;
pub mod ensemble;
mod error;
mod kernel;
pub mod matrix;
pub mod nmf;
pub mod preprocess;
pub mod select;

pub use cluster::{
    balanced_kmeans, consensus, silhouette, silhouette_with, within_cluster_dissimilarity,
    ClusteringResult, ConsensusSignatures,
};
pub use ensemble::{
    derive_seed, extract_signature_vectors, run_ensemble, Ensemble, Executor, FactorSide,
    Sequential, SignatureVectorSet,
};
pub use error::{Error, Result};
pub use matrix::{cosine_dissimilarity, frobenius_loss, masked_frobenius_loss, Mask, Matrix};
pub use nmf::{
    init_factors, solve, solve_from, update_h, update_w, FactorPair, SolveOptions, FLUSH_TO_ZERO,
};
pub use preprocess::{
    invert_transforms, log_transform, preprocess, skewness, to_matrix, unit_range, AttributeReport,
    AttributeTransform, Dataset, DropKind, DropReason, Dropped, LocationReport, LogMode,
    PreprocessReport,
};
pub use select::{
    analyze_k, select_optimal_k, sweep, KDiagnostics, KOutcome, Selection, SelectionRule, Sweep,
};
