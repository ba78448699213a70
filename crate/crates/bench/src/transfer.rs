//! Cross-task transfer by fine-tuning.
//!
//! Two synthetic tasks share their spatial factors and draw their own
//! temporal factors. A DRQN is trained on the source task and then used on a
//! target task that has only a few fully sensed training cycles, in three
//! ways: as is (no transfer), fine-tuned on the target cycles (transfer),
//! and trained from scratch on the target cycles alone (short train).

use std::fs;
use std::path::{Path, PathBuf};

use cellsel::agents::{fine_tune, train_drqn, Budget};
use cellsel::datagen::{spatial_factors, split, temporal_factors, DatasetSplit, SplitSpec};
use cellsel::rng::{substream, Stream};
use cellsel::QualitySpec;
use serde::{Deserialize, Serialize};

use crate::config::{Calibration, EnvSpec, PolicySpec, TaskSpec};
use crate::experiment::{
    calibrate_epsilon, episode_env, evaluate, synth_from_factors, train, with_window, PreparedTask, RunReport,
    SeedResult, TrainedPolicy,
};
use crate::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: TransferData,
    pub task: TaskSpec,
    pub quality: QualitySpec,
    /// Split of the source task.
    pub source_split: SplitSpec,
    /// Fully sensed cycles available on the target before testing.
    #[serde(default = "default_target_train")]
    pub target_train_cycles: usize,
    #[serde(default)]
    pub env: EnvSpec,
    /// Calibrated on the source task; the target uses the same epsilon.
    #[serde(default)]
    pub calibrate: Option<Calibration>,
    /// Must be a `drqn` policy; its budget trains the source model.
    pub policy: PolicySpec,
    pub fine_tune_budget: Budget,
    /// Budget of the from-scratch target model; the policy budget if unset.
    #[serde(default)]
    pub short_train_budget: Option<Budget>,
}

fn default_name() -> String {
    "transfer".into()
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_target_train() -> usize {
    10
}

/// Shape of the two synthetic tasks; `noise` is relative to the noiseless
/// entry standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferData {
    pub source_cycles: usize,
    pub target_cycles: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_period")]
    pub seasonal_period: f64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_length_scale")]
    pub length_scale: f64,
    #[serde(default)]
    pub heterogeneity: f64,
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

impl TransferConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TransferConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(BenchError::Config("no seeds".into()));
        }
        if !matches!(self.policy, PolicySpec::Drqn { .. }) {
            return Err(BenchError::Config("transfer needs a drqn policy".into()));
        }
        self.policy.validate()?;
        if self.target_train_cycles == 0 || self.target_train_cycles >= self.data.target_cycles {
            return Err(BenchError::Config(format!(
                "target_train_cycles {} must lie in 1..{}",
                self.target_train_cycles, self.data.target_cycles
            )));
        }
        if self.fine_tune_budget.episodes == 0 {
            return Err(BenchError::Config("fine_tune_budget needs at least one episode".into()));
        }
        Ok(())
    }
}

/// Source and target tasks of one seed.
pub struct TaskPair {
    pub source: PreparedTask,
    pub target: PreparedTask,
}

/// Builds both tasks from one spatial factor draw; epsilon is calibrated on
/// the source when configured.
pub fn correlated_tasks(cfg: &TransferConfig, seed: u64) -> Result<TaskPair> {
    let task = cfg.task.build()?;
    let d = &cfg.data;
    let mut rng = substream(seed, Stream::Data);
    let u = spatial_factors(&task, d.rank, d.length_scale, d.heterogeneity, &mut rng)?;
    let vs = temporal_factors(d.source_cycles, d.rank, d.seasonal_period, d.level, d.amplitude, &mut rng)?;
    let vt = temporal_factors(d.target_cycles, d.rank, d.seasonal_period, d.level, d.amplitude, &mut rng)?;
    let source_data = synth_from_factors(&task, &u, &vs, d.noise, seed, &mut rng)?;
    let target_data = synth_from_factors(&task, &u, &vt, d.noise, seed, &mut rng)?;

    let env = cfg.env.build(&task, cfg.quality);
    let source_split = split(source_data.num_cycles(), cfg.source_split, env.window_k)?;
    let mut source = PreparedTask {
        data: source_data,
        split: source_split,
        env,
    };
    if let Some(c) = cfg.calibrate {
        source.env.quality.epsilon = calibrate_epsilon(&source, c.random_fraction, c.iterations, seed)?;
        log::info!("seed {seed}: calibrated epsilon {:.5}", source.env.quality.epsilon);
    }
    let target = PreparedTask {
        data: target_data,
        split: DatasetSplit {
            train: 0..cfg.target_train_cycles,
            test: cfg.target_train_cycles..d.target_cycles,
        },
        env: source.env.clone(),
    };
    Ok(TaskPair { source, target })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub transfer: RunReport,
    pub no_transfer: RunReport,
    pub short_train: RunReport,
    pub random: RunReport,
}

impl TransferReport {
    pub fn all(&self) -> [&RunReport; 4] {
        [&self.transfer, &self.no_transfer, &self.short_train, &self.random]
    }
}

impl std::fmt::Display for TransferReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<12} {:>18} {:>18}", "policy", "avg cells", "satisfaction")?;
        for r in self.all() {
            writeln!(
                f,
                "{:<12} {:>18} {:>18}",
                r.policy,
                r.avg_selected_cells.to_string(),
                r.quality_satisfaction_rate.to_string()
            )?;
        }
        Ok(())
    }
}

/// Per-seed results of the four target-task policies.
pub fn run_transfer_seed(cfg: &TransferConfig, seed: u64) -> Result<[SeedResult; 4]> {
    let PolicySpec::Drqn {
        learning,
        net,
        replay,
        budget,
        episode_cycles,
    } = &cfg.policy
    else {
        return Err(BenchError::Config("transfer needs a drqn policy".into()));
    };
    let pair = correlated_tasks(cfg, seed)?;
    let source = train(&pair.source, &cfg.policy, seed)?;
    let TrainedPolicy::Drqn(source_params) = source.policy else {
        unreachable!("drqn spec trains a drqn policy");
    };

    let target = &pair.target;
    let env = with_window(&target.env, learning.window_k);
    let range = target.split.train.clone();
    let tuned = fine_tune(
        &source_params,
        |e| episode_env(target, &env, range.clone(), *episode_cycles, seed, e),
        learning,
        net,
        replay,
        cfg.fine_tune_budget,
        seed,
    )?;
    let short = train_drqn(
        |e| episode_env(target, &env, range.clone(), *episode_cycles, seed, e),
        learning,
        net,
        replay,
        cfg.short_train_budget.unwrap_or(*budget),
        None,
        seed,
    )?;

    let eps = target.env.quality.epsilon;
    let run = |policy: TrainedPolicy, spec: &PolicySpec| -> Result<SeedResult> {
        let trace = evaluate(target, spec, &policy, seed)?;
        Ok(SeedResult::from_trace(seed, &trace, eps))
    };
    let results = [
        run(TrainedPolicy::Drqn(tuned.params), &cfg.policy)?,
        run(TrainedPolicy::Drqn(source_params), &cfg.policy)?,
        run(TrainedPolicy::Drqn(short.params), &cfg.policy)?,
        run(TrainedPolicy::Random, &PolicySpec::Random)?,
    ];
    for (name, r) in ["transfer", "no_transfer", "short_train", "random"].iter().zip(&results) {
        log::info!(
            "{name} seed {seed}: {:.3} cells/cycle, satisfaction {:.3}",
            r.avg_selected_cells,
            r.quality_satisfaction_rate
        );
    }
    Ok(results)
}

/// Runs every seed; with an output directory `transfer.json` is rewritten
/// after each seed.
pub fn run_transfer(cfg: &TransferConfig) -> Result<TransferReport> {
    cfg.validate()?;
    let mut per: [Vec<SeedResult>; 4] = Default::default();
    let mut report = None;
    for &seed in &cfg.seeds {
        let results = run_transfer_seed(cfg, seed)?;
        for (acc, r) in per.iter_mut().zip(results) {
            acc.push(r);
        }
        // Per-seed epsilons may differ under calibration; the report keeps
        // the first one as its nominal value.
        let eps = per[0][0].epsilon;
        let mk = |name: &str, rows: &Vec<SeedResult>| RunReport::new(&cfg.name, name, eps, cfg.quality.p, rows.clone());
        let r = TransferReport {
            transfer: mk("transfer", &per[0]),
            no_transfer: mk("no_transfer", &per[1]),
            short_train: mk("short_train", &per[2]),
            random: mk("random", &per[3]),
        };
        if let Some(dir) = &cfg.output_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("transfer.json"), serde_json::to_string_pretty(&r)? + "\n")?;
        }
        report = Some(r);
    }
    Ok(report.expect("at least one seed"))
}
