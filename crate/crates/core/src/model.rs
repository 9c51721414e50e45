//! Joint-angle domain types: joint models, trajectories, segment metadata
//! and datasets.
//!
//! All angles are radians. A [`Series`] is the bare `frames × dof` matrix
//! that the numeric routines operate on; a [`Trajectory`] binds a series to
//! a [`JointModel`] and a frame rate.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel labels of the full seven-DOF arm, in storage order.
pub const FULL7_CHANNELS: [&str; 7] = [
    "plane_of_elevation",
    "angle_of_elevation",
    "internal_rotation",
    "elbow_flexion",
    "supination",
    "wrist_flexion",
    "deviation",
];

/// Channels whose positive sense depends on body side.
const LATERAL_CHANNELS: [&str; 4] = [
    "plane_of_elevation",
    "internal_rotation",
    "supination",
    "deviation",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JointModel {
    Full7,
    ElbowWrist4,
    WristOnly3,
    ShoulderElbow4,
}

impl JointModel {
    pub const ALL: [JointModel; 4] = [
        JointModel::Full7,
        JointModel::ElbowWrist4,
        JointModel::WristOnly3,
        JointModel::ShoulderElbow4,
    ];

    pub fn dof_count(self) -> usize {
        self.full7_columns().len()
    }

    /// Column indices of this model inside the seven-DOF channel order.
    pub fn full7_columns(self) -> &'static [usize] {
        match self {
            JointModel::Full7 => &[0, 1, 2, 3, 4, 5, 6],
            JointModel::ElbowWrist4 => &[3, 4, 5, 6],
            JointModel::WristOnly3 => &[4, 5, 6],
            JointModel::ShoulderElbow4 => &[0, 1, 2, 3],
        }
    }

    pub fn channel_labels(self) -> Vec<&'static str> {
        self.full7_columns()
            .iter()
            .map(|&c| FULL7_CHANNELS[c])
            .collect()
    }

    /// Indices (in this model's column order) of the side-dependent channels.
    pub fn lateral_columns(self) -> Vec<usize> {
        self.channel_labels()
            .iter()
            .enumerate()
            .filter(|(_, l)| LATERAL_CHANNELS.contains(l))
            .map(|(i, _)| i)
            .collect()
    }

    /// Column indices of `target` inside `self`, if `target` is a subset.
    pub fn projection_to(self, target: JointModel) -> Option<Vec<usize>> {
        let own = self.full7_columns();
        target
            .full7_columns()
            .iter()
            .map(|c| own.iter().position(|o| o == c))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            JointModel::Full7 => "Full7",
            JointModel::ElbowWrist4 => "ElbowWrist4",
            JointModel::WristOnly3 => "WristOnly3",
            JointModel::ShoulderElbow4 => "ShoulderElbow4",
        }
    }
}

impl fmt::Display for JointModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JointModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        JointModel::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown joint model `{s}`")))
    }
}

/// Row-major `frames × dof` matrix of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    data: Vec<f64>,
    frames: usize,
    dof: usize,
}

impl Series {
    pub fn new(data: Vec<f64>, dof: usize) -> Result<Self> {
        if dof == 0 {
            return Err(Error::invalid("series needs at least one channel"));
        }
        if data.is_empty() {
            return Err(Error::Empty("series"));
        }
        if !data.len().is_multiple_of(dof) {
            return Err(Error::invalid(format!(
                "{} samples do not divide into {dof} channels",
                data.len()
            )));
        }
        let frames = data.len() / dof;
        Ok(Series { data, frames, dof })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dof = rows.first().ok_or(Error::Empty("series"))?.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dof);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dof {
                return Err(Error::DimensionMismatch {
                    expected: dof,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Series::new(data, dof)
    }

    /// Single-channel series.
    pub fn univariate(values: &[f64]) -> Result<Self> {
        Series::new(values.to_vec(), 1)
    }

    /// Builds a series from per-channel columns of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let dof = columns.len();
        let frames = columns.first().ok_or(Error::Empty("series"))?.len();
        if let Some(c) = columns.iter().find(|c| c.len() != frames) {
            return Err(Error::DimensionMismatch {
                expected: frames,
                actual: c.len(),
            });
        }
        let mut data = Vec::with_capacity(frames * dof);
        for f in 0..frames {
            data.extend(columns.iter().map(|c| c[f]));
        }
        Series::new(data, dof)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.dof..(i + 1) * self.dof]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dof..(i + 1) * self.dof]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dof)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows().map(|r| r[c]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, frame: usize, channel: usize) -> f64 {
        self.data[frame * self.dof + channel]
    }

    /// Time-reversed copy.
    pub fn reversed(&self) -> Series {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.dof).rev() {
            data.extend_from_slice(row);
        }
        Series { data, ..*self }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Series {
        let data = self
            .rows()
            .flat_map(|r| cols.iter().map(move |&c| r[c]))
            .collect();
        Series {
            data,
            frames: self.frames,
            dof: cols.len(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Series {
        Series {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Series) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One motion segment bound to its joint model.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Series,
    frame_rate: f64,
    model: JointModel,
}

impl Trajectory {
    /// Checked constructor: column count must match the model, at least two
    /// frames, all samples finite, positive frame rate.
    pub fn new(samples: Series, frame_rate: f64, model: JointModel) -> Result<Self> {
        let t = Trajectory {
            samples,
            frame_rate,
            model,
        };
        match t.violations().into_iter().next() {
            Some(v) => Err(Error::Invalid(v)),
            None => Ok(t),
        }
    }

    pub(crate) fn new_unchecked(samples: Series, frame_rate: f64, model: JointModel) -> Self {
        Trajectory {
            samples,
            frame_rate,
            model,
        }
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.samples.dof() != self.model.dof_count() {
            out.push(format!(
                "column count {} does not match {} ({} channels)",
                self.samples.dof(),
                self.model,
                self.model.dof_count()
            ));
        }
        if self.samples.frames() < 2 {
            out.push(format!(
                "needs at least 2 frames, has {}",
                self.samples.frames()
            ));
        }
        if !self.samples.is_finite() {
            out.push("contains non-finite samples".to_string());
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            out.push(format!("frame rate {} is not positive", self.frame_rate));
        }
        out
    }

    pub fn samples(&self) -> &Series {
        &self.samples
    }

    pub fn frames(&self) -> usize {
        self.samples.frames()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn model(&self) -> JointModel {
        self.model
    }

    pub fn reversed(&self) -> Trajectory {
        Trajectory {
            samples: self.samples.reversed(),
            ..*self
        }
    }

    pub fn with_samples(&self, samples: Series) -> Result<Trajectory> {
        Trajectory::new(samples, self.frame_rate, self.model)
    }

    /// Restricts the trajectory to the channels of `target`.
    pub fn project(&self, target: JointModel) -> Result<Trajectory> {
        let cols = self
            .model
            .projection_to(target)
            .ok_or_else(|| Error::ModelMismatch {
                left: self.model.to_string(),
                right: target.to_string(),
            })?;
        Ok(Trajectory {
            samples: self.samples.select_columns(&cols),
            frame_rate: self.frame_rate,
            model: target,
        })
    }
}

impl AsRef<Series> for Trajectory {
    fn as_ref(&self) -> &Series {
        &self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Return,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Handedness {
    Right,
    Left,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub task_code: String,
    pub submotion_index: u32,
    pub subject_id: String,
    pub repetition: u32,
    pub direction: Direction,
    pub handedness: Handedness,
}

impl SegmentMeta {
    /// Stable identifier, e.g. `mp-2-s03-r1`.
    pub fn id(&self) -> String {
        format!(
            "{}-{}-{}-r{}",
            self.task_code, self.submotion_index, self.subject_id, self.repetition
        )
    }

    pub fn key(&self) -> (&str, u32, &str, u32) {
        (
            &self.task_code,
            self.submotion_index,
            &self.subject_id,
            self.repetition,
        )
    }

    /// Identifier of the motion type (task and sub-motion).
    pub fn motion_id(&self) -> String {
        format!("{}-{}", self.task_code, self.submotion_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub trajectory: Trajectory,
    pub meta: SegmentMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub model: JointModel,
    pub segments: Vec<Segment>,
}

/// A broken invariant found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub segment: String,
    pub rule: String,
}

impl Dataset {
    pub fn new(model: JointModel, segments: Vec<Segment>) -> Self {
        Dataset { model, segments }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.segments.iter().map(|s| s.meta.id()).collect()
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.segments.iter().map(|s| &s.trajectory)
    }

    /// Restricts every segment to the channels of `target`.
    pub fn project(&self, target: JointModel) -> Result<Dataset> {
        if target == self.model {
            return Ok(self.clone());
        }
        let segments = self
            .segments
            .iter()
            .map(|s| {
                Ok(Segment {
                    trajectory: s.trajectory.project(target)?,
                    meta: s.meta.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            model: target,
            segments,
        })
    }

    /// Mirrors every left-handed segment into the right-handed convention.
    pub fn mirror_left_handed(&self) -> Result<Dataset> {
        let segments = self
            .segments
            .iter()
            .map(|s| match s.meta.handedness {
                Handedness::Right => Ok(s.clone()),
                Handedness::Left => {
                    let trajectory = mirror_left_handed(&s.trajectory, &s.meta)?;
                    let mut meta = s.meta.clone();
                    meta.handedness = Handedness::Right;
                    Ok(Segment { trajectory, meta })
                }
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            model: self.model,
            segments,
        })
    }
}

pub fn validate_dataset(d: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for s in &d.segments {
        let id = s.meta.id();
        if s.trajectory.model != d.model {
            out.push(Violation {
                segment: id.clone(),
                rule: format!(
                    "model {} differs from dataset model {}",
                    s.trajectory.model, d.model
                ),
            });
        }
        for rule in s.trajectory.violations() {
            out.push(Violation {
                segment: id.clone(),
                rule,
            });
        }
        if s.meta.submotion_index < 1 {
            out.push(Violation {
                segment: id.clone(),
                rule: "submotion index must be >= 1".into(),
            });
        }
        if !(1..=3).contains(&s.meta.repetition) {
            out.push(Violation {
                segment: id.clone(),
                rule: format!("repetition {} not in 1..=3", s.meta.repetition),
            });
        }
        let key = s.meta.key();
        if !seen.insert(key) {
            out.push(Violation {
                segment: id,
                rule: "duplicate (task, submotion, subject, repetition)".into(),
            });
        }
    }
    out
}

/// Flips the sign of the side-dependent channels of a left-handed segment.
pub fn mirror_left_handed(t: &Trajectory, m: &SegmentMeta) -> Result<Trajectory> {
    if m.handedness != Handedness::Left {
        return Err(Error::invalid(format!(
            "segment {} is right-handed; mirroring applies to left-handed data only",
            m.id()
        )));
    }
    Ok(mirror_channels(t))
}

pub(crate) fn mirror_channels(t: &Trajectory) -> Trajectory {
    let lateral = t.model.lateral_columns();
    let mut samples = t.samples.clone();
    for f in 0..samples.frames() {
        let row = samples.frame_mut(f);
        for &c in &lateral {
            row[c] = -row[c];
        }
    }
    Trajectory { samples, ..*t }
}

/// Largest absolute change of any channel between consecutive frames.
pub fn max_frame_jump(s: &Series) -> f64 {
    (1..s.frames())
        .flat_map(|f| {
            s.frame(f)
                .iter()
                .zip(s.frame(f - 1))
                .map(|(a, b)| (a - b).abs())
        })
        .fold(0.0, f64::max)
}
