//! k-means and the two extensions used for codebook training: transition
//! clustering (k-means in a PCA frame with a growing number of active
//! dimensions) and ε-penalized assignment.

mod kmeans;
mod pca;
mod transition;

pub use kmeans::{
    kmeans, nearest_objective, regularized_assign, regularized_kmeans, sample_init, EpsPenalty,
    KMeansConfig, KMeansResult,
};
pub(crate) use kmeans::CHUNK;
pub use pca::{pca_basis, PcaBasis};
pub use transition::{regularized_transition_cluster, transition_cluster, TransitionSchedule};
