use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::averaging::DEFAULT_DBA_ITERATIONS;
use crate::divergence::Measure;
use crate::error::{Error, Result};
use crate::fpca::CoefficientMetric;
use crate::hcluster::{WardInput, DEFAULT_RESTARTS, MIN_WINDOW};
use crate::io::{read_file, AngleUnit, LoadOptions};
use crate::kinematics::ArmGeometry;
use crate::model::JointModel;

/// Declarative pipeline settings, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Joint model to cluster; a subset of the recorded model is projected.
    pub model: Option<JointModel>,
    pub measure: Measure,
    pub z_normalize: bool,
    pub linkage: WardInput,
    /// Minimum L-method evaluation window.
    pub knee_window: usize,
    /// Use this many clusters instead of the detected knee.
    pub clusters: Option<usize>,
    pub dba_iterations: usize,
    /// Variance fraction the reported fPCA components must cover.
    pub fpca_threshold: f64,
    pub fpca_metric: CoefficientMetric,
    /// Component curves exported per cluster.
    pub fpca_export: usize,
    /// Scaling of exported component curves; `None` uses each component's
    /// variance fraction.
    pub fpca_alpha: Option<f64>,
    pub seed: u64,
    pub restarts: usize,
    pub max_k: usize,
    pub geometry: ArmGeometry,
    /// Worker threads for the divergence stage.
    pub threads: Option<usize>,
    pub angle_unit: Option<AngleUnit>,
    pub allow_wrap_jumps: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: None,
            measure: Measure::NormalizedDtw,
            z_normalize: false,
            linkage: WardInput::Squared,
            knee_window: MIN_WINDOW,
            clusters: None,
            dba_iterations: DEFAULT_DBA_ITERATIONS,
            fpca_threshold: 0.9,
            fpca_metric: CoefficientMetric::Raw,
            fpca_export: 3,
            fpca_alpha: None,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            max_k: 25,
            geometry: ArmGeometry::default(),
            threads: None,
            angle_unit: None,
            allow_wrap_jumps: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_file(path)?;
        PipelineConfig::from_toml(&text).map_err(|e| match e {
            Error::Invalid(m) => Error::parse(path, m),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fpca_threshold > 0.0 && self.fpca_threshold <= 1.0) {
            return Err(Error::invalid("fpca_threshold must be in (0, 1]"));
        }
        if self.knee_window < 2 {
            return Err(Error::invalid("knee_window must be >= 2"));
        }
        if self.restarts == 0 || self.max_k == 0 {
            return Err(Error::invalid("restarts and max_k must be >= 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be >= 1"));
        }
        if self.clusters == Some(0) {
            return Err(Error::invalid("clusters must be >= 1"));
        }
        if let Some(a) = self.fpca_alpha {
            if !a.is_finite() {
                return Err(Error::invalid("fpca_alpha must be finite"));
            }
        }
        self.geometry.validate()
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            unit: self.angle_unit,
            allow_wrap_jumps: self.allow_wrap_jumps,
        }
    }
}
