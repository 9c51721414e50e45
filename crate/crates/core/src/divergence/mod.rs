//! Pairwise divergence measures between trajectories.

mod bezier;
mod dtw;
mod matrix;

pub use bezier::{bezier_divergence, bezier_residual, fit_cubic_bezier, BezierFeature};
pub use dtw::{
    align, bidirectional_divergence, cost_and_length, dtw, normalized_dtw, Alignment, DtwOptions,
    LocalCost, WarpPath,
};
pub use matrix::{
    divergence_matrix, divergence_matrix_of, z_normalize, DivergenceMatrix, DivergenceOptions,
    Measure,
};

#[cfg(test)]
pub(crate) use dtw::tests as dtw_tests;
