use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::averaging::orient;
use crate::divergence::{divergence_matrix_of, DivergenceOptions, Measure};
use crate::error::Result;
use crate::hcluster::{cut, k_medoids, quality_score, ward_cluster_with};
use crate::io::write_csv;
use crate::model::{Dataset, SegmentMeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub k: usize,
    pub ward_dtw: f64,
    pub ward_bezier: f64,
    pub kmedoids_dtw: f64,
}

/// Quality score against cluster count for Ward on normalized DTW, Ward on
/// Bézier features and K-medoids on normalized DTW, all over individual
/// segments. Bézier features are fit to direction-oriented segments since
/// that measure has no reversal handling of its own.
pub fn compare_methods(d: &Dataset, cfg: &PipelineConfig) -> Result<Vec<CompareRow>> {
    let ids = d.ids();
    let metas: Vec<SegmentMeta> = d.segments.iter().map(|s| s.meta.clone()).collect();
    let samples: Vec<_> = d.trajectories().map(|t| t.samples()).collect();
    let opts = |measure| DivergenceOptions {
        measure,
        z_normalize: cfg.z_normalize,
        threads: cfg.threads,
    };
    let dtw = divergence_matrix_of(&ids, &samples, opts(Measure::NormalizedDtw))?;
    let trajs: Vec<_> = d.trajectories().collect();
    let dirs: Vec<_> = metas.iter().map(|m| m.direction).collect();
    let oriented = orient(&trajs, &dirs);
    let oriented_samples: Vec<_> = oriented.iter().map(|t| t.samples()).collect();
    let bezier = divergence_matrix_of(&ids, &oriented_samples, opts(Measure::BezierEuclid))?;

    let ward_dtw = ward_cluster_with(&dtw, cfg.linkage)?;
    let ward_bezier = ward_cluster_with(&bezier, cfg.linkage)?;
    let max_k = cfg.max_k.min(d.len());
    (1..=max_k)
        .map(|k| {
            let km = k_medoids(&dtw, k, cfg.restarts, cfg.seed)?;
            Ok(CompareRow {
                k,
                ward_dtw: quality_score(&cut(&ward_dtw, k)?, &metas)?,
                ward_bezier: quality_score(&cut(&ward_bezier, k)?, &metas)?,
                kmedoids_dtw: quality_score(&km.assignment, &metas)?,
            })
        })
        .collect()
}

pub fn save_comparison(path: &Path, rows: &[CompareRow]) -> Result<()> {
    write_csv(
        path,
        &["k", "ward_dtw", "ward_bezier", "kmedoids_dtw"],
        rows.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.ward_dtw.to_string(),
                r.ward_bezier.to_string(),
                r.kmedoids_dtw.to_string(),
            ]
        }),
    )
}
