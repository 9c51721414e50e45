//! Staged clustering pipeline over an artifact directory.
//!
//! Stages run in order and hand results to each other only through files in
//! the output directory, so any stage can be rerun on its own. Each stage
//! stores a cache key derived from its parameters and the keys of its
//! upstream stages in `.cache/`, and a provenance record in `provenance/`.
//! A stage whose key and outputs are already present is skipped.

mod compare;
mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use compare::{compare_methods, save_comparison, CompareRow};
pub use config::PipelineConfig;

use crate::averaging::{batch_dtw_align, cluster_average_with, cross_subject_average_with, orient};
use crate::divergence::{divergence_matrix_of, DivergenceMatrix, DivergenceOptions};
use crate::error::{Error, Result};
use crate::fpca::{cluster_fpca_with, components_to_cover};
use crate::hcluster::{
    cut, l_method_curve, merge_curve, ward_cluster_with, Dendrogram, KneeResult,
};
use crate::io::{
    dataset_hash, hash_str, load_dataset, read_csv, read_json, read_series_csv, write_csv,
    write_file, write_json, write_trajectory_csv,
};
use crate::kinematics::{save_trace, trace_motion};
use crate::model::{validate_dataset, Dataset, Direction, Handedness, JointModel, Trajectory};

pub const STAGES: [&str; 8] = [
    "ingest",
    "averages",
    "divergence",
    "dendrogram",
    "knee",
    "cut",
    "clusters",
    "trace",
];

const CACHE_DIR: &str = ".cache";
const PROVENANCE_DIR: &str = "provenance";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: &'static str,
    pub status: CacheStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub key: String,
    pub upstream: BTreeMap<String, String>,
    pub params: Value,
    /// Output files relative to the artifact directory.
    pub outputs: Vec<String>,
}

/// One cross-subject average as listed in `averages/index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionEntry {
    pub motion: String,
    pub task_code: String,
    pub submotion_index: u32,
    pub direction: Direction,
    pub frame_rate: f64,
    pub model: JointModel,
    pub segments: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IngestSummary {
    dataset_hash: String,
    recorded_model: JointModel,
    model: JointModel,
    segments: usize,
    motions: usize,
    mirrored: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub cluster: usize,
    pub motions: Vec<String>,
    pub segments: usize,
    pub frame_rate: f64,
    pub model: JointModel,
    pub average: crate::averaging::AverageProvenance,
}

pub struct Pipeline {
    config: PipelineConfig,
    data_dir: Option<PathBuf>,
    out: PathBuf,
    dataset: Option<Dataset>,
    reports: Vec<StageReport>,
}

fn cluster_dir(c: usize) -> String {
    format!("clusters/cluster_{c:02}")
}

impl Pipeline {
    pub fn new(config: PipelineConfig, data_dir: Option<&Path>, out: &Path) -> Self {
        Pipeline {
            config,
            data_dir: data_dir.map(Path::to_path_buf),
            out: out.to_path_buf(),
            dataset: None,
            reports: Vec::new(),
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    /// Cache outcome of every stage run so far, in order.
    pub fn reports(&self) -> &[StageReport] {
        &self.reports
    }

    /// Loads, validates, projects and mirrors the input dataset.
    pub fn dataset(&mut self) -> Result<&Dataset> {
        if self.dataset.is_none() {
            let dir = self.data_dir.clone().ok_or_else(|| {
                Error::invalid("missing input: no dataset directory given")
                    .in_stage("ingest", vec![])
            })?;
            let raw = load_dataset(&dir, self.config.load_options())
                .map_err(|e| e.in_stage("ingest", vec![]))?;
            self.dataset = Some(prepare(&raw, self.config.model)?);
        }
        Ok(self.dataset.as_ref().expect("loaded above"))
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn stored_key(&self, stage: &str) -> Option<String> {
        fs::read_to_string(self.path(&format!("{CACHE_DIR}/{stage}.key")))
            .ok()
            .map(|s| s.trim().to_string())
    }

    fn upstream_key(&self, stage: &'static str, of: &str) -> Result<String> {
        self.stored_key(of).ok_or_else(|| {
            Error::invalid(format!(
                "missing input: stage `{of}` has no results in {}",
                self.out.display()
            ))
            .in_stage(stage, vec![])
        })
    }

    fn is_fresh(&self, stage: &str, key: &str) -> bool {
        if self.stored_key(stage).as_deref() != Some(key) {
            return false;
        }
        let prov: Provenance =
            match read_json(&self.path(&format!("{PROVENANCE_DIR}/{stage}.json"))) {
                Ok(p) => p,
                Err(_) => return false,
            };
        prov.key == key && prov.outputs.iter().all(|o| self.path(o).is_file())
    }

    /// Runs `compute` unless the stage is cached under the same key.
    /// `compute` returns the files it wrote.
    fn run_stage(
        &mut self,
        stage: &'static str,
        upstream: BTreeMap<String, String>,
        params: Value,
        compute: impl FnOnce(&mut Self) -> Result<Vec<String>>,
    ) -> Result<CacheStatus> {
        let mut parts = vec![stage.to_string(), params.to_string()];
        for (k, v) in &upstream {
            parts.push(format!("{k}={v}"));
        }
        let key = hash_str(&parts.iter().map(String::as_str).collect::<Vec<_>>());
        let status = if self.is_fresh(stage, &key) {
            CacheStatus::Hit
        } else {
            let key_path = self.path(&format!("{CACHE_DIR}/{stage}.key"));
            if key_path.exists() {
                fs::remove_file(&key_path).map_err(|e| Error::io(&key_path, e))?;
            }
            let mut outputs = compute(self).map_err(|e| e.in_stage(stage, vec![]))?;
            outputs.sort();
            let prov = Provenance {
                stage: stage.to_string(),
                key: key.clone(),
                upstream,
                params,
                outputs,
            };
            write_json(&self.path(&format!("{PROVENANCE_DIR}/{stage}.json")), &prov)?;
            write_file(&key_path, format!("{key}\n"))?;
            CacheStatus::Miss
        };
        self.reports.push(StageReport { stage, status });
        Ok(status)
    }

    fn upstream(&self, stage: &'static str, of: &[&str]) -> Result<BTreeMap<String, String>> {
        of.iter()
            .map(|s| Ok((s.to_string(), self.upstream_key(stage, s)?)))
            .collect()
    }

    pub fn ingest(&mut self) -> Result<CacheStatus> {
        let hash = {
            let d = self.dataset()?;
            dataset_hash(d)
        };
        let upstream = BTreeMap::from([("dataset".to_string(), hash)]);
        let params = json!({
            "model": self.config.model,
            "angle_unit": self.config.angle_unit,
            "allow_wrap_jumps": self.config.allow_wrap_jumps,
        });
        self.run_stage("ingest", upstream, params, |p| {
            let raw_model = {
                let dir = p.data_dir.clone().expect("dataset loaded");
                read_json::<crate::io::Manifest>(&dir.join(crate::io::MANIFEST_FILE))?.model
            };
            let d = p.dataset()?;
            let summary = IngestSummary {
                dataset_hash: dataset_hash(d),
                recorded_model: raw_model,
                model: d.model,
                segments: d.len(),
                motions: motion_groups(d).len(),
                mirrored: d
                    .segments
                    .iter()
                    .filter(|s| s.meta.handedness == Handedness::Left)
                    .map(|s| s.meta.id())
                    .collect(),
            };
            let rel = "ingest.json".to_string();
            write_json(&p.path(&rel), &summary)?;
            Ok(vec![rel])
        })
    }

    pub fn averages(&mut self) -> Result<CacheStatus> {
        let upstream = self.upstream("averages", &["ingest"])?;
        let params = json!({ "dba_iterations": self.config.dba_iterations });
        self.run_stage("averages", upstream, params, |p| {
            let iters = p.config.dba_iterations;
            let d = p.dataset()?.clone();
            let groups = motion_groups(&d);
            let results: Vec<(MotionEntry, crate::averaging::Average)> = groups
                .par_iter()
                .map(|((task, sub), idx)| {
                    let ids: Vec<String> = idx.iter().map(|&i| d.segments[i].meta.id()).collect();
                    let direction = d.segments[idx[0]].meta.direction;
                    if idx
                        .iter()
                        .any(|&i| d.segments[i].meta.direction != direction)
                    {
                        return Err(Error::invalid(format!(
                            "motion {task}-{sub} mixes direction flags"
                        ))
                        .in_stage("averages", ids));
                    }
                    let avg = cross_subject_average_with(&d, task, *sub, iters)
                        .map_err(|e| e.in_stage("averages", ids))?;
                    let motion = format!("{task}-{sub}");
                    let entry = MotionEntry {
                        file: format!("averages/{motion}.csv"),
                        motion,
                        task_code: task.clone(),
                        submotion_index: *sub,
                        direction,
                        frame_rate: avg.trajectory.frame_rate(),
                        model: avg.trajectory.model(),
                        segments: idx.len(),
                    };
                    Ok((entry, avg))
                })
                .collect::<Result<_>>()?;
            let mut outputs = Vec::new();
            for (entry, avg) in &results {
                write_trajectory_csv(&p.path(&entry.file), &avg.trajectory)?;
                let prov = format!("averages/{}.json", entry.motion);
                write_json(&p.path(&prov), &avg.provenance())?;
                outputs.push(entry.file.clone());
                outputs.push(prov);
            }
            let index: Vec<&MotionEntry> = results.iter().map(|(e, _)| e).collect();
            write_json(&p.path("averages/index.json"), &index)?;
            outputs.push("averages/index.json".into());
            Ok(outputs)
        })
    }

    /// Reads the cross-subject averages back from the artifact directory.
    pub fn load_averages(&self) -> Result<Vec<(MotionEntry, Trajectory)>> {
        let index: Vec<MotionEntry> = read_json(&self.path("averages/index.json"))?;
        index
            .into_iter()
            .map(|e| {
                let path = self.path(&e.file);
                let (_, s) = read_series_csv(&path)?;
                let t = Trajectory::new(s, e.frame_rate, e.model)
                    .map_err(|err| Error::parse(&path, err))?;
                Ok((e, t))
            })
            .collect()
    }

    pub fn divergence(&mut self) -> Result<CacheStatus> {
        let upstream = self.upstream("divergence", &["averages"])?;
        let params = json!({
            "measure": self.config.measure,
            "z_normalize": self.config.z_normalize,
        });
        let source = upstream["averages"].clone();
        self.run_stage("divergence", upstream, params, |p| {
            let avgs = p.load_averages()?;
            let ids: Vec<String> = avgs.iter().map(|(e, _)| e.motion.clone()).collect();
            let items: Vec<_> = avgs.iter().map(|(_, t)| t.samples()).collect();
            let opts = DivergenceOptions {
                measure: p.config.measure,
                z_normalize: p.config.z_normalize,
                threads: p.config.threads,
            };
            let mut m = divergence_matrix_of(&ids, &items, opts)?;
            m.source_hash = Some(source);
            m.save(&p.out, "matrix")?;
            Ok(vec!["matrix.csv".into(), "matrix.json".into()])
        })
    }

    pub fn load_matrix(&self) -> Result<DivergenceMatrix> {
        DivergenceMatrix::load(&self.out, "matrix")
    }

    pub fn dendrogram(&mut self) -> Result<CacheStatus> {
        let upstream = self.upstream("dendrogram", &["divergence"])?;
        let params = json!({ "linkage": self.config.linkage });
        self.run_stage("dendrogram", upstream, params, |p| {
            let d = ward_cluster_with(&p.load_matrix()?, p.config.linkage)?;
            d.save(&p.out, "dendrogram")?;
            Ok(vec!["dendrogram.json".into(), "dendrogram.nwk".into()])
        })
    }

    pub fn load_dendrogram(&self) -> Result<Dendrogram> {
        Dendrogram::load(&self.out, "dendrogram")
    }

    pub fn knee(&mut self) -> Result<CacheStatus> {
        let upstream = self.upstream("knee", &["dendrogram"])?;
        let params = json!({ "knee_window": self.config.knee_window });
        self.run_stage("knee", upstream, params, |p| {
            let d = p.load_dendrogram()?;
            let k = l_method_curve(&merge_curve(&d), p.config.knee_window)?;
            k.save(&p.out, "knee")?;
            Ok(vec!["knee.csv".into(), "knee.json".into()])
        })
    }

    pub fn load_knee(&self) -> Result<KneeResult> {
        read_json(&self.path("knee.json"))
    }

    /// Cuts the dendrogram at the configured cluster count, or at the knee.
    pub fn cut(&mut self) -> Result<CacheStatus> {
        let (upstream, k) = match self.config.clusters {
            Some(k) => (self.upstream("cut", &["dendrogram"])?, k),
            None => {
                let up = self.upstream("cut", &["dendrogram", "knee"])?;
                let k = self
                    .load_knee()
                    .map_err(|e| e.in_stage("cut", vec![]))?
                    .num_clusters;
                (up, k)
            }
        };
        let params = json!({
            "clusters": k,
            "source": if self.config.clusters.is_some() { "config" } else { "knee" },
        });
        self.run_stage("cut", upstream, params, move |p| {
            let d = p.load_dendrogram()?;
            let labels = cut(&d, k)?;
            write_csv(
                &p.path("clusters.csv"),
                &["id", "cluster"],
                d.leaf_ids
                    .iter()
                    .zip(&labels)
                    .map(|(id, c)| vec![id.clone(), c.to_string()]),
            )?;
            Ok(vec!["clusters.csv".into()])
        })
    }

    /// `(id, cluster)` pairs from `clusters.csv`.
    pub fn load_assignment(&self) -> Result<Vec<(String, usize)>> {
        let path = self.path("clusters.csv");
        let (_, rows) = read_csv(&path)?;
        rows.into_iter()
            .map(|r| {
                let c = r
                    .get(1)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::parse(&path, "bad cluster label"))?;
                Ok((r[0].clone(), c))
            })
            .collect()
    }

    /// Cluster averages, batch-DTW alignment and fPCA for every cluster.
    pub fn clusters(&mut self) -> Result<CacheStatus> {
        let upstream = self.upstream("clusters", &["ingest", "cut"])?;
        let params = json!({
            "dba_iterations": self.config.dba_iterations,
            "fpca_metric": self.config.fpca_metric,
            "fpca_threshold": self.config.fpca_threshold,
            "fpca_export": self.config.fpca_export,
            "fpca_alpha": self.config.fpca_alpha,
        });
        self.run_stage("clusters", upstream, params, |p| {
            let assignment: BTreeMap<String, usize> = p.load_assignment()?.into_iter().collect();
            let cfg = p.config.clone();
            let out = p.out.clone();
            let d = p.dataset()?;
            let k = assignment.values().max().map_or(0, |m| m + 1);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
            let mut motions: Vec<Vec<String>> = vec![Vec::new(); k];
            for (i, s) in d.segments.iter().enumerate() {
                let motion = s.meta.motion_id();
                let c = *assignment.get(&motion).ok_or_else(|| {
                    Error::invalid(format!("motion {motion} has no cluster label"))
                        .in_stage("clusters", vec![s.meta.id()])
                })?;
                members[c].push(i);
                if !motions[c].contains(&motion) {
                    motions[c].push(motion);
                }
            }
            let labels = d.model.channel_labels();
            let mut outputs = Vec::new();
            let mut summary = Vec::new();
            let export = cfg.fpca_export;
            let mut header: Vec<String> = [
                "cluster",
                "motions",
                "segments",
                "frames",
                "total_variance",
                "components_to_cover",
                "pairwise_divergence_mean",
            ]
            .map(String::from)
            .to_vec();
            header.extend((1..=export).map(|i| format!("cumulative_{i}")));
            for c in 0..k {
                let ids: Vec<String> = members[c]
                    .iter()
                    .map(|&i| d.segments[i].meta.id())
                    .collect();
                let trajs: Vec<&Trajectory> = members[c]
                    .iter()
                    .map(|&i| &d.segments[i].trajectory)
                    .collect();
                let dirs: Vec<Direction> = members[c]
                    .iter()
                    .map(|&i| d.segments[i].meta.direction)
                    .collect();
                let tag = |e: Error| e.in_stage("clusters", ids.clone());
                let avg = cluster_average_with(&trajs, &dirs, ids.clone(), cfg.dba_iterations)
                    .map_err(tag)?;
                let dir = cluster_dir(c);
                let avg_file = format!("{dir}/average.csv");
                write_trajectory_csv(&out.join(&avg_file), &avg.trajectory)?;
                let record = ClusterRecord {
                    cluster: c,
                    motions: motions[c].clone(),
                    segments: ids.len(),
                    frame_rate: avg.trajectory.frame_rate(),
                    model: avg.trajectory.model(),
                    average: avg.provenance(),
                };
                let rec_file = format!("{dir}/average.json");
                write_json(&out.join(&rec_file), &record)?;
                outputs.extend([avg_file, rec_file]);

                let mut row = vec![
                    c.to_string(),
                    motions[c].join(" "),
                    ids.len().to_string(),
                    avg.trajectory.frames().to_string(),
                ];
                if ids.len() < 2 {
                    row.extend(std::iter::repeat_n(String::new(), 3 + export));
                    summary.push(row);
                    continue;
                }
                let oriented = orient(&trajs, &dirs);
                let series: Vec<_> = oriented.iter().map(|t| t.samples()).collect();
                let aligned = batch_dtw_align(&series, avg.trajectory.samples()).map_err(tag)?;
                let aligned_refs: Vec<_> = aligned.iter().collect();
                let f = cluster_fpca_with(&aligned_refs, cfg.fpca_metric).map_err(tag)?;
                let fpca_file = format!("{dir}/fpca.json");
                f.save(&out.join(&fpca_file))?;
                let comp_file = format!("{dir}/components.csv");
                f.save_component_curves(&out.join(&comp_file), &labels, export, cfg.fpca_alpha)
                    .map_err(tag)?;
                outputs.extend([fpca_file, comp_file]);
                row.push(f.total_variance.to_string());
                row.push(components_to_cover(&f, cfg.fpca_threshold).to_string());
                row.push(f.pairwise_divergence_mean.to_string());
                let cumulative = f.cumulative_fractions();
                for i in 0..export {
                    row.push(cumulative.get(i).map_or(String::new(), |v| v.to_string()));
                }
                summary.push(row);
            }
            let summary_file = "clusters/fpca_summary.csv".to_string();
            write_csv(&out.join(&summary_file), &header, summary)?;
            outputs.push(summary_file);
            Ok(outputs)
        })
    }

    /// Cluster averages as written by the `clusters` stage.
    pub fn load_cluster_averages(&self) -> Result<Vec<(ClusterRecord, Trajectory)>> {
        let prov: Provenance = read_json(&self.path(&format!("{PROVENANCE_DIR}/clusters.json")))?;
        prov.outputs
            .iter()
            .filter(|o| o.ends_with("/average.json"))
            .map(|o| {
                let record: ClusterRecord = read_json(&self.path(o))?;
                let path = self.path(&format!("{}/average.csv", cluster_dir(record.cluster)));
                let (_, s) = read_series_csv(&path)?;
                let t = Trajectory::new(s, record.frame_rate, record.model)
                    .map_err(|e| Error::parse(&path, e))?;
                Ok((record, t))
            })
            .collect()
    }

    /// Forward-kinematics traces of the cluster averages (seven-DOF only).
    pub fn trace(&mut self) -> Result<CacheStatus> {
        let upstream = self.upstream("trace", &["clusters"])?;
        let params = json!({ "geometry": self.config.geometry });
        self.run_stage("trace", upstream, params, |p| {
            let avgs = p.load_cluster_averages()?;
            let mut outputs = Vec::new();
            for (record, t) in &avgs {
                if t.model() != JointModel::Full7 {
                    break;
                }
                let poses = trace_motion(t, &p.config.geometry)?;
                let stem = format!("cluster_{:02}", record.cluster);
                save_trace(&p.path("trace"), &stem, &poses)?;
                outputs.push(format!("trace/{stem}.json"));
                outputs.push(format!("trace/{stem}.csv"));
            }
            Ok(outputs)
        })
    }

    /// Quality-versus-k comparison of the baseline methods on individual
    /// segments.
    pub fn compare(&mut self) -> Result<CacheStatus> {
        let upstream = self.upstream("compare", &["ingest"])?;
        let params = json!({
            "z_normalize": self.config.z_normalize,
            "linkage": self.config.linkage,
            "max_k": self.config.max_k,
            "restarts": self.config.restarts,
            "seed": self.config.seed,
        });
        self.run_stage("compare", upstream, params, |p| {
            let cfg = p.config.clone();
            let rows = compare_methods(p.dataset()?, &cfg)?;
            save_comparison(&p.path("compare.csv"), &rows)?;
            Ok(vec!["compare.csv".into()])
        })
    }

    /// Every stage from ingestion to the kinematic traces.
    pub fn run(&mut self) -> Result<&[StageReport]> {
        self.ingest()?;
        self.averages()?;
        self.divergence()?;
        self.dendrogram()?;
        if self.config.clusters.is_none() {
            self.knee()?;
        }
        self.cut()?;
        self.clusters()?;
        self.trace()?;
        Ok(&self.reports)
    }
}

/// Validation, channel projection and left-hand mirroring.
pub fn prepare(raw: &Dataset, model: Option<JointModel>) -> Result<Dataset> {
    let violations = validate_dataset(raw);
    if !violations.is_empty() {
        let ids = violations.iter().map(|v| v.segment.clone()).collect();
        let rules: Vec<String> = violations
            .iter()
            .map(|v| format!("{}: {}", v.segment, v.rule))
            .collect();
        return Err(Error::invalid(rules.join("; ")).in_stage("validate", ids));
    }
    let projected = match model {
        Some(m) if m != raw.model => raw.project(m).map_err(|e| e.in_stage("project", vec![]))?,
        _ => raw.clone(),
    };
    projected
        .mirror_left_handed()
        .map_err(|e| e.in_stage("mirror", vec![]))
}

/// Segment indices per `(task, sub-motion)`, in key order.
pub fn motion_groups(d: &Dataset) -> Vec<((String, u32), Vec<usize>)> {
    let mut groups: BTreeMap<(String, u32), Vec<usize>> = BTreeMap::new();
    for (i, s) in d.segments.iter().enumerate() {
        groups
            .entry((s.meta.task_code.clone(), s.meta.submotion_index))
            .or_default()
            .push(i);
    }
    groups.into_iter().collect()
}

/// Lists every file under `dir` with its contents, relative paths sorted.
pub fn snapshot(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) -> Result<()> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("under root")
                    .to_string_lossy()
                    .into_owned();
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                out.push((rel, bytes));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}
