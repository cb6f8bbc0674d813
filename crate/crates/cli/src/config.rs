//! Run configuration. TOML on disk (JSON is accepted too); unknown keys are
//! rejected before anything runs.
//!
//! ```toml
//! [io]
//! input = "data.csv"        # fit only
//! output = "out"
//! group_column = "group"
//! truth_column = "truth"    # optional true labels, used for the Rand index
//! value_columns = ["x"]     # default: every other column
//!
//! [model]                   # see furbi::models::ModelConfig
//! model = "two_sample_gaussian_known_var"
//! ...
//!
//! [report]
//! grid = { lo = -5.0, hi = 5.0, points = 201 }
//! ```

use std::path::{Path, PathBuf};

use furbi::base_measure::BaseMeasure;
use furbi::levy::LevySpec;
use furbi::models::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub io: IoConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependence: Option<DependenceConfig>,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reproduce: Option<ReproduceConfig>,
    /// Free-form notes carried into the manifest (scale reductions and such).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "default_group")]
    pub group_column: String,
    #[serde(default = "default_truth")]
    pub truth_column: String,
    /// Data columns; every column other than group and truth when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub value_columns: Vec<String>,
}

fn default_group() -> String {
    "group".into()
}

fn default_truth() -> String {
    "truth".into()
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            input: None,
            output: None,
            group_column: default_group(),
            truth_column: default_truth(),
            value_columns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn points(&self) -> CliResult<Vec<f64>> {
        if !(self.hi > self.lo) || self.points < 2 || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(CliError::Config("report.grid needs lo < hi and at least 2 points".into()));
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| self.lo + i as f64 * step).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// At most this many sampled partitions enter the VI point estimate
    /// (evenly thinned).
    #[serde(default = "default_vi_samples")]
    pub vi_samples: usize,
}

fn default_vi_samples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependenceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<LevySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<BaseMeasure>,
    /// Hierarchical Dirichlet process comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hdp: Option<HdpConfig>,
    #[serde(default = "yes")]
    pub quadrature: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloConfig>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdpConfig {
    pub theta: f64,
    pub theta0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub replicates: usize,
    #[serde(default = "default_atoms")]
    pub atoms: usize,
}

fn default_atoms() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }
}
