//! Clustering of multivariate joint-angle trajectories.
//!
//! The crate covers the whole analysis chain for pre-segmented arm motions:
//! DTW divergences with reversal handling, DTW barycenter averaging, Ward
//! hierarchical clustering with L-method knee selection, K-medoids and
//! Bézier-feature baselines, batch-DTW alignment, B-spline functional PCA,
//! and forward kinematics for exporting average motions.

pub mod averaging;
pub mod divergence;
pub mod error;
pub mod fpca;
pub mod hcluster;
pub mod io;
pub mod kinematics;
pub mod model;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    Dataset, Direction, Handedness, JointModel, Segment, SegmentMeta, Series, Trajectory,
};
