//! Balanced clustering of restart signatures, silhouette analysis, and
//! consensus factors.

mod assignment;
mod consensus;
mod kmeans;
mod silhouette;

pub use consensus::{consensus, nnls, ConsensusSignatures};
pub use kmeans::{balanced_kmeans, within_cluster_dissimilarity, ClusteringResult};
pub use silhouette::{cluster_means, silhouette, silhouette_with};
