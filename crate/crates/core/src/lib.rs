//! Cell selection for sparse mobile crowdsensing.
//!
//! A sensing area is split into `m` cells and time into cycles. Each cycle a
//! policy picks cells one at a time; readings of unpicked cells are inferred
//! by low-rank matrix completion, and picking stops once the inference meets
//! an `(epsilon, p)` quality requirement. This crate provides the episodic
//! environment, the inference and quality-assessment machinery, and four
//! selection policies: uniform random, query-by-committee, tabular
//! Q-learning and a recurrent deep Q-network with transfer fine-tuning.

pub mod agents;
pub mod completion;
pub mod config;
pub mod datagen;
pub mod env;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod quality;
pub mod rng;

pub use config::{ErrorMetric, ErrorScope, Explore, LearningParams, QualitySpec, RewardParams, TaskConfig};
pub use error::{Error, Result};
