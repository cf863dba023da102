//! Label-switching-robust post-processing: similarity matrices, consensus
//! clustering via PAM, and pooled cluster-parameter summaries.

pub mod pam;
pub mod similarity;
pub mod summarize;

pub use pam::{pam, select_k, silhouette_width, PamResult};
pub use similarity::{
    build_similarity, dissimilarity, load_similarity, save_similarity, SimilarityMatrix,
};
pub use summarize::{
    aggregate_cluster_params, cluster_effect_contrasts, representative_clustering, AffineMap,
    ClusterSummary, ContrastTable, CoordinateSummary, ParamKind, RepresentativeClustering,
};
