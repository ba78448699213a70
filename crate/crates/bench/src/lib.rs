//! Experiment harness for cell-selection policies: configuration, training
//! and deployment-mode evaluation runs, comparison tables and plot data.

pub mod config;
pub mod experiment;
pub mod gradcheck;
pub mod report;
pub mod toy;
pub mod transfer;

pub use config::{Calibration, DatasetSpec, EnvSpec, ExperimentConfig, PolicySpec, TaskSpec};
pub use experiment::{run_experiment, RunReport, SeedResult, Summary};
pub use report::{compare, emit_plotdata, Comparison, PlotRow};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cellsel::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for BenchError {
    fn from(e: serde_json::Error) -> Self {
        BenchError::Serde(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Serde(e.to_string())
    }
}

impl BenchError {
    /// Process exit code: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Core(cellsel::Error::InvalidConfig(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
