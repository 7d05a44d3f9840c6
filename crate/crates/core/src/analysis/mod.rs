//! Embedding-space evaluation: triplet accuracy, regression probes,
//! dimensionality reduction, hierarchical clustering and SVG plots.

mod accuracy;
mod cluster;
mod pca;
mod plot;
mod probe;
mod umap;

pub use accuracy::{accuracy_table, triplet_accuracy, AccuracyReport, AccuracyRow};
pub use cluster::{
    adjusted_rand_index, agglomerative_cluster, pairwise_distances, select_clusters, select_clusters_in, silhouette_score,
    ClusterReport, Dendrogram,
};
pub use pca::{pca_fit_transform, Pca};
pub use plot::{scatter_svg, ColorBy};
pub use probe::{probe_regress, ProbeConfig, ProbeReport};
pub use umap::{fit_ab, umap_lite, UmapConfig};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
