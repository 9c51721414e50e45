use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kinclust::divergence::Measure;
use kinclust::fpca::CoefficientMetric;
use kinclust::hcluster::WardInput;
use kinclust::io::{load_dataset, AngleUnit, LoadOptions};
use kinclust::model::validate_dataset;
use kinclust::pipeline::{CacheStatus, Pipeline, PipelineConfig};
use kinclust::synth::{generate, SynthSpec};
use kinclust::{Error, JointModel, Result};

#[derive(Parser)]
#[command(name = "kinclust", version, about = "Cluster joint-angle trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset directory and list rule violations.
    Validate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        degrees: bool,
        #[arg(long)]
        allow_wrap_jumps: bool,
    },
    /// Write a synthetic corpus with planted clusters.
    Synth(SynthArgs),
    /// Cross-subject averages of every motion.
    Average(StageArgs),
    /// Divergence matrix between the averages.
    Divergence(StageArgs),
    /// Ward dendrogram of the divergence matrix.
    Cluster(StageArgs),
    /// L-method knee of the dendrogram.
    Knee(StageArgs),
    /// Flat clusters from the dendrogram.
    Cut(StageArgs),
    /// Cluster averages, batch-DTW alignment and functional PCA.
    Fpca(StageArgs),
    /// Forward-kinematics traces of the cluster averages.
    Trace(StageArgs),
    /// Quality score against cluster count for the baseline methods.
    Compare(StageArgs),
    /// Every stage from ingestion to the kinematic traces.
    Pipeline(StageArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "WristOnly3")]
    model: JointModel,
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    #[arg(long, default_value_t = 6)]
    motions_per_cluster: usize,
    #[arg(long, default_value_t = 12)]
    subjects: usize,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long, default_value_t = 60)]
    frames: usize,
    #[arg(long, default_value_t = 0.02)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0.1)]
    duration_jitter: f64,
    #[arg(long, default_value_t = 2)]
    left_handed: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Dtw,
    Bezier,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkageArg {
    Squared,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Raw,
    Gram,
}

#[derive(Args)]
struct StageArgs {
    /// Artifact directory.
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory (needed by stages that read segments).
    #[arg(long)]
    data: Option<PathBuf>,
    /// TOML configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<JointModel>,
    #[arg(long, value_enum)]
    measure: Option<MeasureArg>,
    #[arg(long, value_enum)]
    linkage: Option<LinkageArg>,
    #[arg(long)]
    knee_window: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    fpca_threshold: Option<f64>,
    #[arg(long, value_enum)]
    fpca_metric: Option<MetricArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_k: Option<usize>,
    #[arg(long)]
    z_normalize: bool,
    #[arg(long)]
    degrees: bool,
    #[arg(long)]
    allow_wrap_jumps: bool,
}

impl StageArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if self.model.is_some() {
            c.model = self.model;
        }
        if let Some(m) = self.measure {
            c.measure = match m {
                MeasureArg::Dtw => Measure::NormalizedDtw,
                MeasureArg::Bezier => Measure::BezierEuclid,
            };
        }
        if let Some(l) = self.linkage {
            c.linkage = match l {
                LinkageArg::Squared => WardInput::Squared,
                LinkageArg::Raw => WardInput::Raw,
            };
        }
        if let Some(m) = self.fpca_metric {
            c.fpca_metric = match m {
                MetricArg::Raw => CoefficientMetric::Raw,
                MetricArg::Gram => CoefficientMetric::Gram,
            };
        }
        c.knee_window = self.knee_window.unwrap_or(c.knee_window);
        c.clusters = self.clusters.or(c.clusters);
        c.fpca_threshold = self.fpca_threshold.unwrap_or(c.fpca_threshold);
        c.seed = self.seed.unwrap_or(c.seed);
        c.threads = self.threads.or(c.threads);
        c.restarts = self.restarts.unwrap_or(c.restarts);
        c.max_k = self.max_k.unwrap_or(c.max_k);
        c.z_normalize |= self.z_normalize;
        c.allow_wrap_jumps |= self.allow_wrap_jumps;
        if self.degrees {
            c.angle_unit = Some(AngleUnit::Degrees);
        }
        c.validate()?;
        Ok(c)
    }

    fn pipeline(&self) -> Result<Pipeline> {
        Ok(Pipeline::new(
            self.config()?,
            self.data.as_deref(),
            &self.out,
        ))
    }
}

fn report(p: &Pipeline) {
    for r in p.reports() {
        let status = match r.status {
            CacheStatus::Hit => "cached",
            CacheStatus::Miss => "computed",
        };
        println!("{:<11} {status}", r.stage);
    }
}

fn validate(data: &Path, degrees: bool, allow_wrap_jumps: bool) -> Result<bool> {
    let opts = LoadOptions {
        unit: degrees.then_some(AngleUnit::Degrees),
        allow_wrap_jumps,
    };
    let d = load_dataset(data, opts).map_err(|e| e.in_stage("ingest", vec![]))?;
    let violations = validate_dataset(&d);
    for v in &violations {
        println!("{}: {}", v.segment, v.rule);
    }
    println!("{} segments, {} violations", d.len(), violations.len());
    Ok(violations.is_empty())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        model: a.model,
        num_clusters: a.clusters,
        motions_per_cluster: a.motions_per_cluster,
        subjects: a.subjects,
        repetitions: a.repetitions,
        frames: a.frames,
        noise_sd: a.noise_sd,
        duration_jitter: a.duration_jitter,
        left_handed_subjects: a.left_handed,
        seed: a.seed,
        ..SynthSpec::default()
    };
    let corpus = generate(&spec)?;
    corpus.save(&a.out)?;
    println!(
        "wrote {} segments to {}",
        corpus.dataset.len(),
        a.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate {
            data,
            degrees,
            allow_wrap_jumps,
        } => return validate(&data, degrees, allow_wrap_jumps),
        Command::Synth(a) => synth(&a)?,
        Command::Average(a) => {
            let mut p = a.pipeline()?;
            p.ingest()?;
            p.averages()?;
            report(&p);
        }
        Command::Divergence(a) => {
            let mut p = a.pipeline()?;
            p.divergence()?;
            report(&p);
        }
        Command::Cluster(a) => {
            let mut p = a.pipeline()?;
            p.dendrogram()?;
            report(&p);
        }
        Command::Knee(a) => {
            let mut p = a.pipeline()?;
            p.knee()?;
            report(&p);
            println!("knee at {} clusters", p.load_knee()?.num_clusters);
        }
        Command::Cut(a) => {
            let mut p = a.pipeline()?;
            p.cut()?;
            report(&p);
        }
        Command::Fpca(a) => {
            let mut p = a.pipeline()?;
            p.ingest()?;
            p.clusters()?;
            report(&p);
        }
        Command::Trace(a) => {
            let mut p = a.pipeline()?;
            p.trace()?;
            report(&p);
        }
        Command::Compare(a) => {
            let mut p = a.pipeline()?;
            p.ingest()?;
            p.compare()?;
            report(&p);
        }
        Command::Pipeline(a) => {
            let mut p = a.pipeline()?;
            p.run()?;
            report(&p);
            let k = p
                .load_assignment()?
                .iter()
                .map(|(_, c)| c + 1)
                .max()
                .unwrap_or(0);
            println!("{k} clusters written to {}", p.out_dir().display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Stage { .. } => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
