//! Ward hierarchical clustering, L-method cluster-count selection, the
//! K-medoids baseline and partition scores.

mod kmedoids;
mod lmethod;
mod quality;
mod ward;

pub use kmedoids::{k_medoids, KMedoidsResult, DEFAULT_RESTARTS};
pub use lmethod::{
    l_method, l_method_curve, merge_curve, KneePass, KneeResult, MIN_USABLE_POINTS, MIN_WINDOW,
};
pub use quality::{adjusted_rand_index, quality_score, repetition_pairs};
pub use ward::{cut, ward_cluster, ward_cluster_with, Dendrogram, Merge, WardInput};
