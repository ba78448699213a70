//! Experiment configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use cellsel::agents::{Budget, NetConfig, ReplayConfig};
use cellsel::completion::{AlsParams, InferenceMethod};
use cellsel::config::AQI_THRESHOLDS;
use cellsel::datagen::{SplitSpec, SynthParams};
use cellsel::env::EnvConfig;
use cellsel::quality::AssessorKind;
use cellsel::{ErrorMetric, ErrorScope, LearningParams, QualitySpec, RewardParams, TaskConfig};
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Traces, checkpoints and the report go here when set.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub task: TaskSpec,
    pub quality: QualitySpec,
    pub split: SplitSpec,
    #[serde(default)]
    pub env: EnvSpec,
    /// Replaces `quality.epsilon` per seed by a calibrated value.
    #[serde(default)]
    pub calibrate: Option<Calibration>,
    pub policy: PolicySpec,
}

/// Picks epsilon so that a random policy, stopping on the true error over
/// the training cycles, senses `random_fraction` of the cells per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub random_fraction: f64,
    #[serde(default = "default_calibration_iters")]
    pub iterations: usize,
}

fn default_calibration_iters() -> usize {
    12
}

fn default_name() -> String {
    "experiment".into()
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

/// Where the ground-truth matrix comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Low-rank synthetic data; `noise` is relative to the noiseless
    /// entry standard deviation. Without `seed` each run seed draws its own
    /// matrix.
    Synthetic {
        cycles: usize,
        #[serde(default = "default_rank")]
        rank: usize,
        #[serde(default)]
        noise: f64,
        #[serde(default = "default_period")]
        seasonal_period: f64,
        #[serde(default = "default_level")]
        level: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_length_scale")]
        length_scale: f64,
        #[serde(default)]
        heterogeneity: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// `cycle,cell,value` file.
    Csv { path: PathBuf },
}

fn default_rank() -> usize {
    4
}
fn default_period() -> f64 {
    48.0
}
fn default_level() -> f64 {
    6.0
}
fn default_amplitude() -> f64 {
    2.0
}
fn default_length_scale() -> f64 {
    2.0
}

impl DatasetSpec {
    pub fn synth_params(&self) -> Option<SynthParams> {
        match self {
            DatasetSpec::Synthetic {
                rank,
                seasonal_period,
                level,
                amplitude,
                length_scale,
                heterogeneity,
                ..
            } => Some(SynthParams {
                rank: *rank,
                noise_sigma: 0.0,
                seasonal_period: *seasonal_period,
                level: *level,
                amplitude: *amplitude,
                length_scale: *length_scale,
                heterogeneity: *heterogeneity,
            }),
            DatasetSpec::Csv { .. } => None,
        }
    }

    /// Resolves a relative CSV path against the config file's directory.
    pub fn resolve(&mut self, base: &Path) {
        if let DatasetSpec::Csv { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

/// Task description. Cells are laid out row by row on a `grid_cols` wide
/// grid unless explicit `coords` are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub num_cells: usize,
    #[serde(default = "default_cycle_length")]
    pub cycle_length: String,
    #[serde(default = "default_metric")]
    pub error_metric: ErrorMetric,
    #[serde(default)]
    pub error_scope: ErrorScope,
    #[serde(default)]
    pub grid_cols: Option<usize>,
    #[serde(default)]
    pub coords: Option<Vec<(f64, f64)>>,
    /// Category breakpoints for the classification metric; the AQI
    /// breakpoints are used when omitted.
    #[serde(default)]
    pub category_thresholds: Option<Vec<f64>>,
}

fn default_cycle_length() -> String {
    "1h".into()
}
fn default_metric() -> ErrorMetric {
    ErrorMetric::MeanAbsolute
}

impl TaskSpec {
    pub fn build(&self) -> Result<TaskConfig, BenchError> {
        let coords = match (&self.coords, self.grid_cols) {
            (Some(c), None) => c.clone(),
            (None, cols) => {
                let cols = cols.unwrap_or_else(|| (self.num_cells as f64).sqrt().ceil() as usize).max(1);
                (0..self.num_cells)
                    .map(|i| ((i / cols) as f64, (i % cols) as f64))
                    .collect()
            }
            (Some(_), Some(_)) => {
                return Err(BenchError::Config("give either task.coords or task.grid_cols, not both".into()))
            }
        };
        let thresholds = match (self.error_metric, &self.category_thresholds) {
            (_, Some(t)) => Some(t.clone()),
            (ErrorMetric::Classification, None) => Some(AQI_THRESHOLDS.to_vec()),
            (ErrorMetric::MeanAbsolute, None) => None,
        };
        let cfg = TaskConfig::new(
            self.num_cells,
            self.cycle_length.clone(),
            self.error_metric,
            coords,
            thresholds,
        )?;
        Ok(cfg.with_scope(self.error_scope))
    }
}

/// Environment settings; every field has a default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub window_k: Option<usize>,
    pub history_len: Option<usize>,
    pub inference: Option<InferenceMethod>,
    pub assessor: Option<AssessorKind>,
    pub bootstrap_b: Option<usize>,
    pub min_sensed: Option<usize>,
    pub reward: Option<RewardParams>,
}

impl EnvSpec {
    pub fn build(&self, task: &TaskConfig, quality: QualitySpec) -> EnvConfig {
        let mut cfg = EnvConfig::for_task(task, quality);
        if let Some(k) = self.window_k {
            cfg.window_k = k;
        }
        if let Some(w) = self.history_len {
            cfg.history_len = w;
        }
        cfg.inference = self
            .inference
            .clone()
            .unwrap_or_else(|| InferenceMethod::Als(AlsParams::for_cells(task.num_cells)));
        if let Some(a) = self.assessor {
            cfg.assessor = a;
        }
        if let Some(b) = self.bootstrap_b {
            cfg.bootstrap_b = b;
        }
        if let Some(s) = self.min_sensed {
            cfg.min_sensed = s;
        }
        if let Some(r) = self.reward {
            cfg.reward = r;
        }
        cfg
    }
}

/// Which policy to run and how to train it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Random,
    Qbc {
        #[serde(default = "default_knn_k")]
        knn_k: usize,
    },
    Tabular {
        #[serde(default)]
        learning: LearningParams,
        budget: Budget,
        #[serde(default = "default_state_cap")]
        state_cap: usize,
        #[serde(default = "default_episode_cycles")]
        episode_cycles: usize,
    },
    Drqn {
        #[serde(default)]
        learning: LearningParams,
        #[serde(default)]
        net: NetConfig,
        #[serde(default)]
        replay: ReplayConfig,
        budget: Budget,
        #[serde(default = "default_episode_cycles")]
        episode_cycles: usize,
    },
}

fn default_knn_k() -> usize {
    4
}
fn default_state_cap() -> usize {
    1_000_000
}
fn default_episode_cycles() -> usize {
    24
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Random => "random",
            PolicySpec::Qbc { .. } => "qbc",
            PolicySpec::Tabular { .. } => "tabular",
            PolicySpec::Drqn { .. } => "drqn",
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        match self {
            PolicySpec::Random => Ok(()),
            PolicySpec::Qbc { knn_k } => {
                if *knn_k == 0 {
                    return Err(BenchError::Config("qbc knn_k must be positive".into()));
                }
                Ok(())
            }
            PolicySpec::Tabular {
                learning,
                episode_cycles,
                ..
            } => {
                learning.validate()?;
                if *episode_cycles == 0 {
                    return Err(BenchError::Config("episode_cycles must be positive".into()));
                }
                Ok(())
            }
            PolicySpec::Drqn {
                learning,
                net,
                replay,
                episode_cycles,
                ..
            } => {
                learning.validate()?;
                replay.validate()?;
                if net.hidden == 0 || *episode_cycles == 0 {
                    return Err(BenchError::Config("hidden size and episode_cycles must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, BenchError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.dataset.resolve(base);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, BenchError> {
        toml::to_string(self).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.seeds.is_empty() {
            return Err(BenchError::Config("at least one seed is required".into()));
        }
        let task = self.task.build()?;
        QualitySpec::new(self.quality.epsilon, self.quality.p)?;
        self.env.build(&task, self.quality).validate()?;
        self.policy.validate()?;
        if let Some(c) = &self.calibrate {
            if !(c.random_fraction > 0.0 && c.random_fraction < 1.0) {
                return Err(BenchError::Config("calibrate.random_fraction must be in (0, 1)".into()));
            }
        }
        if let DatasetSpec::Synthetic { cycles, rank, noise, .. } = &self.dataset {
            if *cycles < 2 || *rank == 0 || *rank > task.num_cells.min(*cycles) {
                return Err(BenchError::Config(format!(
                    "synthetic dataset needs 2+ cycles and rank in 1..={}",
                    task.num_cells.min(*cycles)
                )));
            }
            if !(*noise >= 0.0) || !noise.is_finite() {
                return Err(BenchError::Config(format!("noise {noise} must be >= 0")));
            }
        }
        Ok(())
    }
}
