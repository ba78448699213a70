//! One experiment: per seed build the data, split it, train the policy on
//! the training cycles and evaluate it in deployment mode on the test cycles.

use std::fs;
use std::io::BufWriter;
use std::ops::Range;
use std::path::Path;

use cellsel::agents::{
    train_drqn, train_tabular, DrqnPolicy, EpisodeLog, QTable, QbcPolicy, RandomPolicy, TabularPolicy,
};
use cellsel::completion::Committee;
use cellsel::datagen::{compose, entry_std, ingest_csv, spatial_factors, split, temporal_factors, DatasetSplit, GroundTruthMatrix, Provenance};
use cellsel::env::{run_episode, EnvConfig, EpisodeTrace, Mode, Policy, SensingEnv};
use cellsel::neural::{save_params, NetworkParams};
use cellsel::rng::{indexed_substream, substream, Stream};
use cellsel::TaskConfig;
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSpec, ExperimentConfig, PolicySpec};
use crate::{BenchError, Result};

/// Data, split and environment settings for one seed.
#[derive(Debug, Clone)]
pub struct PreparedTask {
    pub data: GroundTruthMatrix,
    pub split: DatasetSplit,
    pub env: EnvConfig,
}

/// Builds the ground truth for `seed`. Synthetic noise is scaled to the
/// noiseless entry standard deviation.
pub fn build_dataset(spec: &DatasetSpec, task: &TaskConfig, seed: u64) -> Result<GroundTruthMatrix> {
    match spec {
        DatasetSpec::Csv { path } => Ok(ingest_csv(path, task)?),
        DatasetSpec::Synthetic { cycles, noise, seed: data_seed, .. } => {
            let data_seed = data_seed.unwrap_or(seed);
            let params = spec.synth_params().expect("synthetic spec");
            let mut rng = substream(data_seed, Stream::Data);
            let u = spatial_factors(task, params.rank, params.length_scale, params.heterogeneity, &mut rng)?;
            let v = temporal_factors(
                *cycles,
                params.rank,
                params.seasonal_period,
                params.level,
                params.amplitude,
                &mut rng,
            )?;
            synth_from_factors(task, &u, &v, *noise, data_seed, &mut rng)
        }
    }
}

/// `U V^T` plus Gaussian noise of `relative_noise` times its entry std.
pub fn synth_from_factors(
    task: &TaskConfig,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    relative_noise: f64,
    seed: u64,
    rng: &mut cellsel::rng::SimRng,
) -> Result<GroundTruthMatrix> {
    let clean = compose(task, u, v, 0.0, rng, Provenance::Ingested)?;
    let sigma = relative_noise * entry_std(clean.values());
    let prov = Provenance::Synthetic {
        seed,
        rank: u.ncols(),
        noise_sigma: sigma,
    };
    Ok(compose(task, u, v, sigma, rng, prov)?)
}

/// Data and split for `seed`, with epsilon calibrated when configured.
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedTask> {
    let task = cfg.task.build()?;
    let data = build_dataset(&cfg.dataset, &task, seed)?;
    let env = cfg.env.build(&task, cfg.quality);
    let split = split(data.num_cycles(), cfg.split, env.window_k)?;
    let mut prepared = PreparedTask { data, split, env };
    if let Some(c) = cfg.calibrate {
        let eps = calibrate_epsilon(&prepared, c.random_fraction, c.iterations, seed)?;
        log::info!("seed {seed}: calibrated epsilon {eps:.5}");
        prepared.env.quality.epsilon = eps;
    }
    Ok(prepared)
}

/// A policy ready for evaluation.
#[derive(Debug, Clone)]
pub enum TrainedPolicy {
    Random,
    Qbc(Committee),
    Tabular(QTable),
    Drqn(NetworkParams),
}

impl TrainedPolicy {
    /// Evaluation policy; random choices use the seed's agent stream.
    pub fn instantiate(&self, seed: u64) -> Box<dyn Policy> {
        let rng = substream(seed, Stream::Agent);
        match self {
            TrainedPolicy::Random => Box::new(RandomPolicy { rng }),
            TrainedPolicy::Qbc(c) => Box::new(QbcPolicy { committee: *c, rng }),
            TrainedPolicy::Tabular(t) => Box::new(TabularPolicy { table: t.clone() }),
            TrainedPolicy::Drqn(p) => Box::new(DrqnPolicy { params: p.clone() }),
        }
    }
}

/// Training-mode environment over a random window of `episode_cycles`
/// cycles inside `range`, preceded by known history from `range.start` on.
pub fn episode_env<'a>(
    prepared: &'a PreparedTask,
    env: &EnvConfig,
    range: Range<usize>,
    episode_cycles: usize,
    seed: u64,
    episode: usize,
) -> cellsel::Result<SensingEnv<'a>> {
    let mut rng = indexed_substream(seed, Stream::Env, episode as u32);
    let len = episode_cycles.min(range.len());
    let lo = range.start + (env.history_len - 1).min(range.len() - len);
    let hi = range.end - len;
    let start = rng.random_range(lo..=hi);
    Ok(SensingEnv::new(&prepared.data, env.clone(), Mode::Training, start..start + len, rng)?
        .with_known_history(range.start))
}

pub struct Trained {
    pub policy: TrainedPolicy,
    pub log: Vec<EpisodeLog>,
}

pub fn train(prepared: &PreparedTask, spec: &PolicySpec, seed: u64) -> Result<Trained> {
    train_on(prepared, spec, prepared.split.train.clone(), seed)
}

/// Trains `spec` on the cycles of `range` (training mode).
pub fn train_on(prepared: &PreparedTask, spec: &PolicySpec, range: Range<usize>, seed: u64) -> Result<Trained> {
    let m = prepared.data.num_cells();
    match spec {
        PolicySpec::Random => Ok(Trained {
            policy: TrainedPolicy::Random,
            log: Vec::new(),
        }),
        PolicySpec::Qbc { knn_k } => Ok(Trained {
            policy: TrainedPolicy::Qbc(Committee {
                knn_k: *knn_k,
                ..Committee::for_cells(m)
            }),
            log: Vec::new(),
        }),
        PolicySpec::Tabular {
            learning,
            budget,
            state_cap,
            episode_cycles,
        } => {
            let env = with_window(&prepared.env, learning.window_k);
            let out = train_tabular(
                |e| episode_env(prepared, &env, range.clone(), *episode_cycles, seed, e),
                learning,
                *budget,
                *state_cap,
                &mut substream(seed, Stream::Agent),
            )?;
            Ok(Trained {
                policy: TrainedPolicy::Tabular(out.table),
                log: out.log,
            })
        }
        PolicySpec::Drqn {
            learning,
            net,
            replay,
            budget,
            episode_cycles,
        } => {
            let env = with_window(&prepared.env, learning.window_k);
            let out = train_drqn(
                |e| episode_env(prepared, &env, range.clone(), *episode_cycles, seed, e),
                learning,
                net,
                replay,
                *budget,
                None,
                seed,
            )?;
            Ok(Trained {
                policy: TrainedPolicy::Drqn(out.params),
                log: out.log,
            })
        }
    }
}

/// The learner's state window overrides the environment's.
pub fn with_window(env: &EnvConfig, k: usize) -> EnvConfig {
    EnvConfig {
        window_k: k,
        ..env.clone()
    }
}

/// Window length the evaluation environment must use for `spec`.
pub fn eval_env(prepared: &PreparedTask, spec: &PolicySpec) -> EnvConfig {
    match spec {
        PolicySpec::Tabular { learning, .. } | PolicySpec::Drqn { learning, .. } => {
            with_window(&prepared.env, learning.window_k)
        }
        _ => prepared.env.clone(),
    }
}

/// Deployment-mode run over `cycles`, with known history from `earliest`.
pub fn evaluate_on(
    prepared: &PreparedTask,
    env: &EnvConfig,
    policy: &TrainedPolicy,
    cycles: Range<usize>,
    earliest: usize,
    seed: u64,
) -> Result<EpisodeTrace> {
    let rng = indexed_substream(seed, Stream::Env, u32::MAX);
    let env = SensingEnv::new(&prepared.data, env.clone(), Mode::Deployment, cycles, rng)?.with_known_history(earliest);
    let mut p = policy.instantiate(seed);
    Ok(run_episode(p.as_mut(), env)?)
}

pub fn evaluate(prepared: &PreparedTask, spec: &PolicySpec, policy: &TrainedPolicy, seed: u64) -> Result<EpisodeTrace> {
    evaluate_on(
        prepared,
        &eval_env(prepared, spec),
        policy,
        prepared.split.test.clone(),
        prepared.split.train.start,
        seed,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Epsilon used for stopping and for the satisfaction rate.
    pub epsilon: f64,
    pub avg_selected_cells: f64,
    pub quality_satisfaction_rate: f64,
    pub test_cycles: usize,
    /// Relative to the output directory.
    pub trace_path: Option<String>,
    pub checkpoint_path: Option<String>,
}

impl SeedResult {
    pub fn from_trace(seed: u64, trace: &EpisodeTrace, epsilon: f64) -> Self {
        SeedResult {
            seed,
            epsilon,
            avg_selected_cells: trace.avg_selected(),
            quality_satisfaction_rate: trace.satisfaction_rate(epsilon),
            test_cycles: trace.records.len(),
            trace_path: None,
            checkpoint_path: None,
        }
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Summary { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, std }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub policy: String,
    pub epsilon: f64,
    pub p: f64,
    pub seeds: Vec<SeedResult>,
    pub avg_selected_cells: Summary,
    pub quality_satisfaction_rate: Summary,
}

impl RunReport {
    pub fn new(name: &str, policy: &str, epsilon: f64, p: f64, mut seeds: Vec<SeedResult>) -> Self {
        seeds.sort_by_key(|s| s.seed);
        let cells: Vec<f64> = seeds.iter().map(|s| s.avg_selected_cells).collect();
        let sat: Vec<f64> = seeds.iter().map(|s| s.quality_satisfaction_rate).collect();
        RunReport {
            name: name.to_string(),
            policy: policy.to_string(),
            epsilon,
            p,
            avg_selected_cells: Summary::of(&cells),
            quality_satisfaction_rate: Summary::of(&sat),
            seeds,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    use std::io::Write;
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in rows {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    w.flush()?;
    Ok(())
}

/// Trains and evaluates `spec` on prepared data; artifacts go under
/// `out/<subdir>/` when `out` is given.
pub fn run_prepared(
    prepared: &PreparedTask,
    spec: &PolicySpec,
    seed: u64,
    out: Option<(&Path, &str)>,
) -> Result<(SeedResult, TrainedPolicy)> {
    let trained = train(prepared, spec, seed)?;
    let trace = evaluate(prepared, spec, &trained.policy, seed)?;
    let mut result = SeedResult::from_trace(seed, &trace, prepared.env.quality.epsilon);
    log::info!(
        "{} seed {seed}: {:.3} cells/cycle, satisfaction {:.3}",
        spec.name(),
        result.avg_selected_cells,
        result.quality_satisfaction_rate
    );
    if let Some((out, rel)) = out {
        let dir = out.join(rel);
        fs::create_dir_all(&dir)?;
        let mut w = BufWriter::new(fs::File::create(dir.join("trace.jsonl"))?);
        trace.write_jsonl(&mut w)?;
        result.trace_path = Some(format!("{rel}/trace.jsonl"));
        if !trained.log.is_empty() {
            write_jsonl(&dir.join("train_log.jsonl"), &trained.log)?;
        }
        if let TrainedPolicy::Drqn(params) = &trained.policy {
            save_params(params, dir.join("drqn.ckpt"))?;
            result.checkpoint_path = Some(format!("{rel}/drqn.ckpt"));
        }
    }
    Ok((result, trained.policy))
}

/// Runs every seed of `cfg` with its configured policy.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut reports = run_suite(cfg, std::slice::from_ref(&cfg.policy))?;
    Ok(reports.remove(0))
}

/// Runs several policies on the same prepared data per seed, one report
/// per policy. With an output directory each report is rewritten after
/// every seed so partial results survive a failure.
pub fn run_suite(cfg: &ExperimentConfig, policies: &[PolicySpec]) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    for p in policies {
        p.validate()?;
    }
    let out = cfg.output_dir.as_deref();
    let single = policies.len() == 1;
    let mut results: Vec<Vec<SeedResult>> = vec![Vec::new(); policies.len()];
    let reports = |results: &[Vec<SeedResult>]| -> Vec<RunReport> {
        policies
            .iter()
            .zip(results)
            .map(|(p, r)| RunReport::new(&cfg.name, p.name(), cfg.quality.epsilon, cfg.quality.p, r.clone()))
            .collect()
    };
    for &seed in &cfg.seeds {
        let prepared = prepare(cfg, seed)?;
        for (i, spec) in policies.iter().enumerate() {
            let rel = if single {
                format!("seed-{seed}")
            } else {
                format!("{}/seed-{seed}", spec.name())
            };
            let (res, _) = run_prepared(&prepared, spec, seed, out.map(|o| (o, rel.as_str())))?;
            results[i].push(res);
        }
        if let Some(dir) = out {
            for r in reports(&results) {
                let file = if single {
                    "report.json".to_string()
                } else {
                    format!("report-{}.json", r.policy)
                };
                r.write(&dir.join(file))?;
            }
        }
    }
    Ok(reports(&results))
}

/// Epsilon at which a random policy, stopping on the true error over the
/// training cycles, senses about `fraction` of the cells per cycle.
/// Bisection over `iterations` halvings.
pub fn calibrate_epsilon(prepared: &PreparedTask, fraction: f64, iterations: usize, seed: u64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(BenchError::Config(format!("fraction {fraction} outside (0, 1)")));
    }
    let m = prepared.data.num_cells() as f64;
    let target = fraction * m;
    let range = prepared.split.train.clone();
    let skip = (prepared.env.history_len - 1).min(range.len() - 1);
    let cycles = range.start + skip..range.end;
    let avg_cells = |eps: f64| -> Result<f64> {
        let mut env = prepared.env.clone();
        env.quality.epsilon = eps;
        let rng = indexed_substream(seed, Stream::Env, u32::MAX - 1);
        let sim = SensingEnv::new(&prepared.data, env, Mode::Training, cycles.clone(), rng)?.with_known_history(range.start);
        let mut policy = RandomPolicy {
            rng: indexed_substream(seed, Stream::Agent, u32::MAX - 1),
        };
        Ok(run_episode(&mut policy, sim)?.avg_selected())
    };
    let mut lo = 0.0;
    let mut hi = entry_std(prepared.data.values()).max(1e-12);
    while avg_cells(hi)? > target {
        hi *= 2.0;
    }
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if avg_cells(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
