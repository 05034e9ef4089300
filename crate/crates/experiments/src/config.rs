use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use htmdp::agents::AgentConfig;
use htmdp::geometry::GeometryConfig;
use htmdp::path::{ring_path, MdpPath, RingPathConfig};
use htmdp::scheduler::SchedulerConfig;
use serde::{Deserialize, Serialize};

/// Output encodings for tabular results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

/// Pairwise audit settings for `certify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    /// Audit every `stride`-th grid point against every other.
    #[serde(default = "one")]
    pub stride: usize,
    /// Relative slack before a pair counts as a violation.
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn one() -> usize {
    1
}

fn default_slack() -> f64 {
    1e-9
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            stride: 1,
            slack: default_slack(),
        }
    }
}

/// Sweep for `tubes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubesConfig {
    pub tau0: Vec<f64>,
    pub eps: Vec<f64>,
}

/// Sweep for `scheduler-stability`; runs HT Q-learning for every `(H, Δ_hys)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(rename = "H")]
    pub h: Vec<u64>,
    pub delta_hys: Vec<f64>,
    /// Large-change threshold applied to every hyperparameter.
    #[serde(default = "default_chatter_eps")]
    pub eps: f64,
}

fn default_chatter_eps() -> f64 {
    0.01
}

/// Snapshot grid for `gen-path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    11
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        Self {
            points: default_points(),
        }
    }
}

/// One experiment file. Unknown keys anywhere are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub path: RingPathConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub tubes: Option<TubesConfig>,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    #[serde(default)]
    pub snapshot: SnapshotConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Checks every block; errors name the offending block.
    pub fn validate(&self) -> Result<()> {
        self.build_path().context("[path]")?;
        self.scheduler.validate().context("[scheduler]")?;
        self.agent.validate().context("[agent]")?;
        if self.geometry.grid < 2 {
            bail!("[geometry] grid must have at least 2 points");
        }
        if self.output.formats.is_empty() {
            bail!("[output] formats must name at least one of csv, json");
        }
        if self.certify.stride == 0 || !(self.certify.slack >= 0.0) {
            bail!("[certify] stride must be positive and slack nonnegative");
        }
        if let Some(t) = &self.tubes {
            if t.tau0.is_empty() || t.eps.is_empty() {
                bail!("[tubes] tau0 and eps must be nonempty");
            }
            if t.tau0.iter().any(|x| !(0.0..=1.0).contains(x)) || t.eps.iter().any(|e| !(*e >= 0.0))
            {
                bail!("[tubes] tau0 must lie in [0, 1] and eps must be nonnegative");
            }
        }
        if let Some(s) = &self.stability {
            if s.h.is_empty() || s.delta_hys.is_empty() {
                bail!("[stability] H and delta_hys must be nonempty");
            }
            if s.h.contains(&0) || s.delta_hys.iter().any(|d| !(*d >= 0.0)) || !(s.eps >= 0.0) {
                bail!("[stability] H must be positive, delta_hys and eps nonnegative");
            }
        }
        if self.snapshot.points < 2 {
            bail!("[snapshot] points must be at least 2");
        }
        Ok(())
    }

    pub fn build_path(&self) -> Result<MdpPath> {
        Ok(ring_path(self.path.clone())?)
    }
}
