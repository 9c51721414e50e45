//! Segment CSV files, dataset manifests and small file helpers shared by the
//! exporters.
//!
//! A segment file has a header row of channel labels followed by one row per
//! frame. A dataset directory holds a `manifest.json` listing each segment
//! file together with its metadata and frame rate.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    max_frame_jump, Dataset, Direction, Handedness, JointModel, Segment, SegmentMeta, Series,
    Trajectory,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    #[default]
    Radians,
    Degrees,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadOptions {
    /// Overrides the unit recorded in the manifest.
    pub unit: Option<AngleUnit>,
    /// Accept consecutive-frame jumps larger than pi.
    pub allow_wrap_jumps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub frame_rate: f64,
    pub task_code: String,
    pub submotion_index: u32,
    pub subject_id: String,
    pub repetition: u32,
    pub direction: Direction,
    pub handedness: Handedness,
}

impl ManifestEntry {
    fn meta(&self) -> SegmentMeta {
        SegmentMeta {
            task_code: self.task_code.clone(),
            submotion_index: self.submotion_index,
            subject_id: self.subject_id.clone(),
            repetition: self.repetition,
            direction: self.direction,
            handedness: self.handedness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: JointModel,
    #[serde(default)]
    pub angle_unit: AngleUnit,
    pub segments: Vec<ManifestEntry>,
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    text.push('\n');
    write_file(path, text)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_file(path)?).map_err(|e| Error::parse(path, e))
}

/// Writes `rows` as CSV with the given header.
pub(crate) fn write_csv<S: AsRef<str>>(
    path: &Path,
    header: &[S],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let map = |e: csv::Error| Error::parse(path, e);
    w.write_record(header.iter().map(|h| h.as_ref()))
        .map_err(map)?;
    for row in rows {
        w.write_record(&row).map_err(map)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::parse(path, e))?;
    write_file(path, bytes)
}

/// Reads a CSV file into its header and string rows.
pub(crate) fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = read_file(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| Error::parse(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(str::to_string).collect())
                .map_err(|e| Error::parse(path, e))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

pub(crate) fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("`{s}` is not a number")))
}

pub fn write_series_csv(path: &Path, labels: &[&str], s: &Series) -> Result<()> {
    if labels.len() != s.dof() {
        return Err(Error::DimensionMismatch {
            expected: s.dof(),
            actual: labels.len(),
        });
    }
    write_csv(
        path,
        labels,
        s.rows().map(|r| r.iter().map(|v| v.to_string()).collect()),
    )
}

/// Reads a segment CSV; returns the header labels and the samples as stored.
pub fn read_series_csv(path: &Path) -> Result<(Vec<String>, Series)> {
    let (header, rows) = read_csv(path)?;
    let mut data = Vec::with_capacity(rows.len() * header.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::parse(
                path,
                format!(
                    "row {} has {} fields, header has {}",
                    i + 1,
                    row.len(),
                    header.len()
                ),
            ));
        }
        for v in row {
            data.push(parse_f64(path, v)?);
        }
    }
    let series = Series::new(data, header.len()).map_err(|e| Error::parse(path, e))?;
    Ok((header, series))
}

pub fn write_trajectory_csv(path: &Path, t: &Trajectory) -> Result<()> {
    write_series_csv(path, &t.model().channel_labels(), t.samples())
}

/// Reads a dataset directory. File-level problems (missing files, header
/// mismatch, angle wraps) are errors; sample-level rules are left to
/// [`validate_dataset`](crate::model::validate_dataset) so that every
/// violation can be reported at once.
pub fn load_dataset(dir: &Path, opts: LoadOptions) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = read_json(&manifest_path)?;
    let unit = opts.unit.unwrap_or(manifest.angle_unit);
    let model = manifest.model;
    let expected: Vec<String> = model
        .channel_labels()
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut segments = Vec::with_capacity(manifest.segments.len());
    for entry in &manifest.segments {
        let path = dir.join(&entry.file);
        let (header, mut series) = read_series_csv(&path)?;
        if header != expected {
            return Err(Error::parse(
                &path,
                format!("header {header:?} does not match {model} channels {expected:?}"),
            ));
        }
        if unit == AngleUnit::Degrees {
            series = series.map(f64::to_radians);
        }
        if !opts.allow_wrap_jumps {
            let jump = max_frame_jump(&series);
            if jump > std::f64::consts::PI {
                return Err(Error::parse(
                    &path,
                    format!(
                        "consecutive-frame jump of {jump:.3} rad exceeds pi (likely angle wrap)"
                    ),
                ));
            }
        }
        segments.push(Segment {
            trajectory: Trajectory::new_unchecked(series, entry.frame_rate, model),
            meta: entry.meta(),
        });
    }
    Ok(Dataset::new(model, segments))
}

/// Writes `d` as `dir/manifest.json` plus one CSV per segment under
/// `dir/segments/`. Angles are written in radians.
pub fn save_dataset(dir: &Path, d: &Dataset) -> Result<()> {
    let mut entries = Vec::with_capacity(d.len());
    for s in &d.segments {
        let file = format!("segments/{}.csv", s.meta.id());
        write_trajectory_csv(&dir.join(&file), &s.trajectory)?;
        entries.push(ManifestEntry {
            file,
            frame_rate: s.trajectory.frame_rate(),
            task_code: s.meta.task_code.clone(),
            submotion_index: s.meta.submotion_index,
            subject_id: s.meta.subject_id.clone(),
            repetition: s.meta.repetition,
            direction: s.meta.direction,
            handedness: s.meta.handedness,
        });
    }
    write_json(
        &dir.join(MANIFEST_FILE),
        &Manifest {
            model: d.model,
            angle_unit: AngleUnit::Radians,
            segments: entries,
        },
    )
}

/// SHA-256 over the model, metadata and raw sample bits of a dataset.
pub fn dataset_hash(d: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update(d.model.name().as_bytes());
    for s in &d.segments {
        h.update(serde_json::to_vec(&s.meta).expect("metadata serializes"));
        h.update(s.trajectory.frame_rate().to_le_bytes());
        h.update((s.trajectory.samples().dof() as u64).to_le_bytes());
        for v in s.trajectory.samples().as_slice() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub(crate) fn hash_str(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}
