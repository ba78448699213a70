use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellsel::datagen::{export_csv, ingest_csv};
use cellsel::neural::{load_params, save_params, Architecture};
use clap::{Parser, Subcommand};

use cellsel_bench::config::{DatasetSpec, ExperimentConfig, PolicySpec};
use cellsel_bench::experiment::{build_dataset, evaluate, prepare, run_suite, train, RunReport, SeedResult, TrainedPolicy};
use cellsel_bench::gradcheck::{check_seeds, GradCheckSpec};
use cellsel_bench::report::{compare, emit_plotdata};
use cellsel_bench::transfer::{run_transfer, TransferConfig};
use cellsel_bench::BenchError;

/// Exit code when a run completes but misses a requested threshold.
const THRESHOLD_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "cellsel", version, about = "Cell selection for sparse crowdsensing: experiments and tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the synthetic ground truth of a config as `cycle,cell,value` CSV.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Load a CSV against the task of a config and summarize it.
    IngestCheck {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the config's dataset path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train the configured DRQN on one seed's training cycles and save it.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train (if needed) and evaluate policies over all seeds; writes reports.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated policy kinds to run with default settings next to
        /// the configured one, e.g. `random,qbc`.
        #[arg(long, value_delimiter = ',')]
        with: Vec<String>,
        /// Evaluate this DRQN checkpoint instead of training.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Reduction of a candidate report against baseline reports.
    Compare {
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long = "baseline", required = true)]
        baselines: Vec<PathBuf>,
        /// Fail with exit code 3 unless every mean reduction reaches this
        /// many percent.
        #[arg(long)]
        min_reduction: Option<f64>,
        /// Also write the tidy plot CSV of all reports.
        #[arg(long)]
        plotdata: Option<PathBuf>,
    },
    /// Source training, then transfer / no-transfer / short-train on the target.
    Transfer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference TD-loss gradients.
    Gradcheck {
        #[arg(long, default_value_t = 6)]
        cells: usize,
        #[arg(long, default_value_t = 8)]
        hidden: usize,
        #[arg(long, default_value_t = 3)]
        window: usize,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
}

/// Either an error with its own exit code or a missed threshold.
enum Failure {
    Bench(BenchError),
    Threshold(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        Failure::Bench(e)
    }
}

impl From<cellsel::Error> for Failure {
    fn from(e: cellsel::Error) -> Self {
        Failure::Bench(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Bench(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Threshold(msg)) => {
            eprintln!("threshold not met: {msg}");
            ExitCode::from(THRESHOLD_FAILED)
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Synth { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            if !matches!(cfg.dataset, DatasetSpec::Synthetic { .. }) {
                return Err(BenchError::Config("synth needs a synthetic dataset".into()).into());
            }
            let data = build_dataset(&cfg.dataset, &cfg.task.build()?, seed)?;
            export_csv(&data, &out)?;
            println!("{} cells x {} cycles -> {}", data.num_cells(), data.num_cycles(), out.display());
        }
        Cmd::IngestCheck { config, csv } => {
            let cfg = ExperimentConfig::load(&config)?;
            let path = match (csv, &cfg.dataset) {
                (Some(p), _) => p,
                (None, DatasetSpec::Csv { path }) => path.clone(),
                (None, _) => return Err(BenchError::Config("no CSV given and the dataset is synthetic".into()).into()),
            };
            let data = ingest_csv(&path, &cfg.task.build()?)?;
            let missing = data.values().iter().filter(|v| v.is_nan()).count();
            println!(
                "{}: {} cells x {} cycles, {} missing entries",
                path.display(),
                data.num_cells(),
                data.num_cycles(),
                missing
            );
        }
        Cmd::Train { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            if !matches!(cfg.policy, PolicySpec::Drqn { .. }) {
                return Err(BenchError::Config("train saves DRQN checkpoints; configure a drqn policy".into()).into());
            }
            let prepared = prepare(&cfg, seed)?;
            let trained = train(&prepared, &cfg.policy, seed)?;
            if let TrainedPolicy::Drqn(params) = &trained.policy {
                save_params(params, &out)?;
            }
            println!("checkpoint written to {}", out.display());
        }
        Cmd::Evaluate {
            config,
            with,
            checkpoint,
            output_dir,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if output_dir.is_some() {
                cfg.output_dir = output_dir;
            }
            if let Some(ckpt) = checkpoint {
                let report = evaluate_checkpoint(&cfg, &ckpt)?;
                println!("{}", report.to_json()?);
                return Ok(());
            }
            let mut policies = vec![cfg.policy.clone()];
            for name in &with {
                policies.push(default_policy(name)?);
            }
            for r in run_suite(&cfg, &policies)? {
                println!(
                    "{:<8} avg cells {}  satisfaction {}",
                    r.policy, r.avg_selected_cells, r.quality_satisfaction_rate
                );
            }
        }
        Cmd::Compare {
            candidate,
            baselines,
            min_reduction,
            plotdata,
        } => {
            let cand = RunReport::read(&candidate)?;
            let base: Vec<RunReport> = baselines.iter().map(|p| RunReport::read(p)).collect::<Result<_, _>>()?;
            let refs: Vec<&RunReport> = base.iter().collect();
            let table = compare(&cand, &refs)?;
            print!("{table}");
            if let Some(path) = plotdata {
                let mut all = vec![cand.clone()];
                all.extend(base.iter().cloned());
                emit_plotdata(&all, &path)?;
            }
            if let Some(min) = min_reduction {
                if let Some(row) = table.rows.iter().find(|r| r.reduction_pct.mean < min) {
                    return Err(Failure::Threshold(format!(
                        "reduction against {} is {:.2} %, below {min} %",
                        row.baseline, row.reduction_pct.mean
                    )));
                }
            }
        }
        Cmd::Transfer { config, output_dir } => {
            let mut cfg = TransferConfig::load(&config)?;
            if output_dir.is_some() {
                cfg.output_dir = output_dir;
            }
            print!("{}", run_transfer(&cfg)?);
        }
        Cmd::Gradcheck {
            cells,
            hidden,
            window,
            seeds,
            tol,
            step,
        } => {
            if cells == 0 || hidden == 0 || window == 0 {
                return Err(BenchError::Config("cells, hidden and window must be positive".into()).into());
            }
            let spec = GradCheckSpec {
                step,
                ..GradCheckSpec::new(cells, hidden, window)
            };
            let checks = check_seeds(&spec, 0..seeds)?;
            let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
            for c in &checks {
                println!("seed {:>3}: max relative error {:.3e} over {} parameters", c.seed, c.max_rel_error, c.checked);
            }
            if worst >= tol {
                return Err(Failure::Threshold(format!("max relative error {worst:.3e} >= {tol:e}")));
            }
        }
    }
    Ok(())
}

fn default_policy(name: &str) -> Result<PolicySpec, BenchError> {
    let text = format!("kind = \"{name}\"");
    let spec: PolicySpec = toml::from_str(&text)
        .map_err(|_| BenchError::Config(format!("'{name}' needs settings; only random and qbc run with defaults")))?;
    Ok(spec)
}

fn evaluate_checkpoint(cfg: &ExperimentConfig, path: &Path) -> Result<RunReport, BenchError> {
    let PolicySpec::Drqn { learning, net, .. } = &cfg.policy else {
        return Err(BenchError::Config("a checkpoint needs a drqn policy in the config".into()));
    };
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        let prepared = prepare(cfg, seed)?;
        let arch = Architecture {
            cells: prepared.data.num_cells(),
            hidden: net.hidden,
            window: learning.window_k,
        };
        let params = load_params(path, Some(&arch))?;
        let trace = evaluate(&prepared, &cfg.policy, &TrainedPolicy::Drqn(params), seed)?;
        results.push(SeedResult::from_trace(seed, &trace, prepared.env.quality.epsilon));
    }
    Ok(RunReport::new(
        &cfg.name,
        cfg.policy.name(),
        cfg.quality.epsilon,
        cfg.quality.p,
        results,
    ))
}
