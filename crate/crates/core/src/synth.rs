//! Synthetic joint-angle corpora with planted cluster structure.
//!
//! Each cluster has a template given by per-channel start and end angles.
//! Motions inside a cluster perturb the template endpoints, and each
//! segment is a minimum-jerk profile between the motion's endpoints plus a
//! per-subject offset, i.i.d. frame noise and a random duration. Motions
//! flagged `Return` are emitted time-reversed. Segments of left-handed
//! subjects are emitted mirrored so that ingestion has to mirror them back.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{save_dataset, write_json};
use crate::model::{
    mirror_channels, Dataset, Direction, Handedness, JointModel, Segment, SegmentMeta, Series,
    Trajectory,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub model: JointModel,
    pub num_clusters: usize,
    pub motions_per_cluster: usize,
    pub subjects: usize,
    pub repetitions: usize,
    /// Frames of an unjittered segment.
    pub frames: usize,
    pub frame_rate: f64,
    /// Standard deviation of the i.i.d. frame noise, radians.
    pub noise_sd: f64,
    /// Per-subject constant offset, in units of `noise_sd`.
    pub subject_offset_scale: f64,
    /// Spread of motion endpoints around the cluster template, in units of
    /// `noise_sd`.
    pub motion_spread_scale: f64,
    /// Minimum RMS endpoint distance between templates, in units of
    /// `noise_sd`.
    pub separation_scale: f64,
    /// Templates draw endpoints uniformly from `[-range, range]`.
    pub endpoint_range: f64,
    /// Segment length is scaled by a factor in `1 ± duration_jitter`.
    pub duration_jitter: f64,
    pub left_handed_subjects: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            model: JointModel::WristOnly3,
            num_clusters: 5,
            motions_per_cluster: 6,
            subjects: 12,
            repetitions: 3,
            frames: 60,
            frame_rate: 100.0,
            noise_sd: 0.02,
            subject_offset_scale: 1.0,
            motion_spread_scale: 3.0,
            separation_scale: 10.0,
            endpoint_range: 1.2,
            duration_jitter: 0.1,
            left_handed_subjects: 2,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("synth spec: {msg}")));
        if self.num_clusters < 1 {
            return bad("num_clusters must be >= 1");
        }
        if self.motions_per_cluster < 1 || self.subjects < 1 {
            return bad("motions_per_cluster and subjects must be >= 1");
        }
        if !(2..=3).contains(&self.repetitions) {
            return bad("repetitions must be 2 or 3");
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return bad("noise_sd must be >= 0");
        }
        if !(0.0..1.0).contains(&self.duration_jitter) {
            return bad("duration_jitter must be in [0, 1)");
        }
        if self.frames < 8 {
            return bad("frames must be >= 8");
        }
        if self.left_handed_subjects > self.subjects {
            return bad("more left-handed subjects than subjects");
        }
        if !(self.frame_rate > 0.0) || !(self.endpoint_range > 0.0) {
            return bad("frame_rate and endpoint_range must be positive");
        }
        Ok(())
    }
}

/// Quintic rest-to-rest profile from `start` to `end`.
pub fn minimum_jerk_profile(start: f64, end: f64, frames: usize) -> Result<Vec<f64>> {
    if frames < 2 {
        return Err(Error::invalid(
            "minimum-jerk profile needs at least 2 frames",
        ));
    }
    Ok((0..frames)
        .map(|i| {
            let t = i as f64 / (frames - 1) as f64;
            let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
            start + (end - start) * s
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLabel {
    pub id: String,
    pub motion: String,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub dataset: Dataset,
    /// Planted cluster per segment, aligned with `dataset.segments`.
    pub labels: Vec<usize>,
    /// Planted cluster per motion id.
    pub motion_labels: Vec<(String, usize)>,
}

impl SynthCorpus {
    pub fn segment_labels(&self) -> Vec<SegmentLabel> {
        self.dataset
            .segments
            .iter()
            .zip(&self.labels)
            .map(|(s, &cluster)| SegmentLabel {
                id: s.meta.id(),
                motion: s.meta.motion_id(),
                cluster,
            })
            .collect()
    }

    /// Writes the dataset directory plus `labels.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        save_dataset(dir, &self.dataset)?;
        write_json(&dir.join("labels.json"), &self.segment_labels())
    }
}

fn rms_distance(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Endpoint vector `[start..., end...]` with its halves swapped.
fn swapped(v: &[f64]) -> Vec<f64> {
    let half = v.len() / 2;
    v[half..].iter().chain(&v[..half]).copied().collect()
}

fn templates(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let dof = spec.model.dof_count();
    let min_sep = spec.separation_scale * spec.noise_sd;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(spec.num_clusters);
    let mut attempts = 0;
    while out.len() < spec.num_clusters {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::invalid(
                "cannot place templates with the requested separation",
            ));
        }
        let cand: Vec<f64> = (0..2 * dof)
            .map(|_| rng.random_range(-spec.endpoint_range..spec.endpoint_range))
            .collect();
        // A template must also stay apart from its own reversal and from
        // the reversal of every other template.
        let self_ok = rms_distance(&cand, &swapped(&cand)) >= min_sep;
        let others_ok = out.iter().all(|t| {
            rms_distance(&cand, t) >= min_sep && rms_distance(&cand, &swapped(t)) >= min_sep
        });
        if self_ok && others_ok {
            out.push(cand);
        }
    }
    Ok(out)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dof = spec.model.dof_count();
    let normal = |sd: f64| Normal::new(0.0, sd).expect("finite sd");
    let noise = normal(spec.noise_sd);
    let spread = normal(spec.motion_spread_scale * spec.noise_sd);
    let offset = normal(spec.subject_offset_scale * spec.noise_sd);

    let templates = templates(spec, &mut rng)?;
    let subject_offsets: Vec<Vec<f64>> = (0..spec.subjects)
        .map(|_| (0..dof).map(|_| offset.sample(&mut rng)).collect())
        .collect();

    let mut segments = Vec::new();
    let mut labels = Vec::new();
    let mut motion_labels = Vec::new();
    let mut motion_index = 0usize;
    for (cluster, template) in templates.iter().enumerate() {
        for _ in 0..spec.motions_per_cluster {
            let endpoints: Vec<f64> = template
                .iter()
                .map(|v| v + spread.sample(&mut rng))
                .collect();
            let direction = if rng.random_bool(0.5) {
                Direction::Return
            } else {
                Direction::Forward
            };
            let task_code = format!("t{:02}", motion_index / 2);
            let submotion_index = (motion_index % 2) as u32 + 1;
            motion_index += 1;
            motion_labels.push((format!("{task_code}-{submotion_index}"), cluster));

            for (subject, sub_offset) in subject_offsets.iter().enumerate() {
                let left = subject < spec.left_handed_subjects;
                for rep in 1..=spec.repetitions {
                    let scale = 1.0 + rng.random_range(-1.0..=1.0) * spec.duration_jitter;
                    let frames = ((spec.frames as f64 * scale).round() as usize).max(8);
                    let columns: Vec<Vec<f64>> = (0..dof)
                        .map(|c| {
                            minimum_jerk_profile(endpoints[c], endpoints[dof + c], frames)
                                .expect("frames >= 8")
                                .into_iter()
                                .map(|v| v + sub_offset[c] + noise.sample(&mut rng))
                                .collect()
                        })
                        .collect();
                    let mut trajectory = Trajectory::new(
                        Series::from_columns(&columns)?,
                        spec.frame_rate,
                        spec.model,
                    )?;
                    if direction == Direction::Return {
                        trajectory = trajectory.reversed();
                    }
                    if left {
                        trajectory = mirror_channels(&trajectory);
                    }
                    segments.push(Segment {
                        trajectory,
                        meta: SegmentMeta {
                            task_code: task_code.clone(),
                            submotion_index,
                            subject_id: format!("s{subject:02}"),
                            repetition: rep as u32,
                            direction,
                            handedness: if left {
                                Handedness::Left
                            } else {
                                Handedness::Right
                            },
                        },
                    });
                    labels.push(cluster);
                }
            }
        }
    }
    Ok(SynthCorpus {
        dataset: Dataset::new(spec.model, segments),
        labels,
        motion_labels,
    })
}
