//! A four-cell task small enough to solve by enumeration.
//!
//! Cells sit on a line at unit spacing. Every cycle reads
//! `a_t * [0, 2, 4, 3] + b_t`, inferred by inverse-distance KNN with two
//! neighbours, and the error tolerance is tiny. Sensing cells 0 and 2
//! reproduces cells 1 and 3 exactly, and no other pair does, so the best
//! policy senses exactly those two cells every cycle.

use cellsel::agents::{Budget, NetConfig, ReplayConfig};
use cellsel::completion::InferenceMethod;
use cellsel::datagen::{DatasetSplit, GroundTruthMatrix, Provenance};
use cellsel::env::EnvConfig;
use cellsel::quality::AssessorKind;
use cellsel::rng::{substream, Stream};
use cellsel::{ErrorMetric, Explore, LearningParams, QualitySpec, RewardParams, TaskConfig};
use nalgebra::DMatrix;
use rand::Rng;

use crate::config::PolicySpec;
use crate::experiment::PreparedTask;
use crate::Result;

pub const TOY_CELLS: usize = 4;
pub const TOY_PROFILE: [f64; TOY_CELLS] = [0.0, 2.0, 4.0, 3.0];
pub const TOY_EPSILON: f64 = 1e-6;

pub fn toy_task() -> TaskConfig {
    let coords = (0..TOY_CELLS).map(|i| (0.0, i as f64)).collect();
    TaskConfig::new(TOY_CELLS, "1h", ErrorMetric::MeanAbsolute, coords, None).expect("valid toy task")
}

/// Readings `a_t * profile + b_t` with `a_t` in [1, 2) and `b_t` in [0, 5).
pub fn toy_matrix(cycles: usize, seed: u64) -> Result<GroundTruthMatrix> {
    let mut rng = substream(seed, Stream::Data);
    let mut v = DMatrix::zeros(TOY_CELLS, cycles);
    for t in 0..cycles {
        let a = rng.random_range(1.0..2.0);
        let b = rng.random_range(0.0..5.0);
        for i in 0..TOY_CELLS {
            v[(i, t)] = a * TOY_PROFILE[i] + b;
        }
    }
    Ok(GroundTruthMatrix::new(v, toy_task(), Provenance::Ingested)?)
}

pub fn toy_env() -> EnvConfig {
    EnvConfig {
        quality: QualitySpec::new(TOY_EPSILON, 0.9).expect("valid"),
        reward: RewardParams::for_cells(TOY_CELLS),
        window_k: 2,
        history_len: 2,
        inference: InferenceMethod::Knn { k: 2 },
        assessor: AssessorKind::Bootstrap,
        bootstrap_b: 200,
        min_sensed: 2,
    }
}

/// `train` leading cycles for learning, the rest for testing.
pub fn toy_prepared(cycles: usize, train: usize, seed: u64) -> Result<PreparedTask> {
    Ok(PreparedTask {
        data: toy_matrix(cycles, seed)?,
        split: DatasetSplit {
            train: 0..train,
            test: train..cycles,
        },
        env: toy_env(),
    })
}

fn toy_learning(alpha: f64, decay: f64) -> LearningParams {
    LearningParams {
        alpha,
        gamma: 0.9,
        delta_start: 1.0,
        delta_end: 0.05,
        delta_decay: decay,
        window_k: 2,
        explore: Explore::OtherOnly,
    }
}

pub fn toy_tabular_spec() -> PolicySpec {
    PolicySpec::Tabular {
        learning: toy_learning(0.5, 0.97),
        budget: Budget::episodes(200),
        state_cap: 10_000,
        episode_cycles: 10,
    }
}

pub fn toy_drqn_spec() -> PolicySpec {
    PolicySpec::Drqn {
        learning: toy_learning(3e-3, 0.95),
        net: NetConfig {
            hidden: 16,
            ..NetConfig::default()
        },
        replay: ReplayConfig {
            capacity: 5_000,
            batch: 32,
            warmup: 200,
            replace_iter: 100,
        },
        budget: Budget::episodes(150),
        episode_cycles: 10,
    }
}
