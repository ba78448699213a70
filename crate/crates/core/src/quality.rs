//! Ground-truth-free check of the `(epsilon, p)` requirement for the
//! current cycle.
//!
//! Each sensed cell is withheld in turn and re-inferred from the others; the
//! resulting leave-one-out errors stand in for the unknown errors at the
//! unsensed cells. Three assessors turn that pool into a probability that
//! the cycle error is within `epsilon`:
//!
//! * `StudentT` (default) fits a normal model to the pool under a flat
//!   prior; the posterior predictive of the mean error over the unsensed
//!   cells is a Student t with `n - 1` degrees of freedom.
//! * `Bootstrap` resamples `num_unsensed` errors with replacement and counts
//!   how often the resampled cycle error is `<= epsilon`. It ignores how
//!   little a pool of a few errors says, and stops too early.
//! * `Beta` treats "cell error `<= epsilon`" as a Bernoulli trial with a
//!   Beta(1, 1) prior and reports the posterior mean success rate.
//!
//! All three are reconstructions of a leave-one-out Bayesian assessor.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use serde::{Deserialize, Serialize};

use crate::completion::{Infer, ObservationWindow};
use crate::config::{ErrorMetric, QualitySpec};
use crate::error::{Error, Result};
use crate::metrics::cell_error;
use crate::rng::SimRng;

/// Leave-one-out errors, one per sensed cell of the current cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct LooErrorPool {
    pub errors: Vec<f64>,
}

pub fn loo_errors(
    window: &ObservationWindow,
    inferer: &dyn Infer,
    metric: ErrorMetric,
    thresholds: &[f64],
) -> Result<LooErrorPool> {
    let mask = window.current_mask();
    let values = window.current_values();
    let sensed: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if sensed.len() < 2 {
        return Err(Error::TooFewSensed(sensed.len()));
    }
    let mut errors = Vec::with_capacity(sensed.len());
    for &cell in &sensed {
        let col = inferer.infer(&window.without_current(cell))?;
        let e = cell_error(values[cell], col.values[cell], metric, thresholds)?;
        if !e.is_finite() {
            return Err(Error::InvalidValue(format!("non-finite LOO error at cell {cell}")));
        }
        errors.push(e);
    }
    Ok(LooErrorPool { errors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssessorKind {
    Bootstrap,
    #[default]
    StudentT,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assessment {
    pub satisfied: bool,
    pub probability: f64,
}

/// Estimates `P(cycle error <= epsilon)` from a LOO pool.
///
/// The resampled statistic is the mean of the drawn errors; for
/// classification pools the entries are 0/1, so the mean is the
/// misclassification fraction.
pub fn assess(
    pool: &LooErrorPool,
    spec: &QualitySpec,
    num_unsensed: usize,
    kind: AssessorKind,
    bootstrap_b: usize,
    rng: &mut SimRng,
) -> Result<Assessment> {
    if pool.errors.is_empty() {
        return Err(Error::EmptyPool);
    }
    if num_unsensed == 0 || bootstrap_b == 0 {
        return Err(Error::InvalidConfig(
            "assessment needs at least one unsensed cell and one resample".into(),
        ));
    }
    let probability = match kind {
        AssessorKind::Bootstrap => {
            let n = pool.errors.len();
            let mut hits = 0usize;
            for _ in 0..bootstrap_b {
                let mut sum = 0.0;
                for _ in 0..num_unsensed {
                    sum += pool.errors[rng.random_range(0..n)];
                }
                if sum / num_unsensed as f64 <= spec.epsilon {
                    hits += 1;
                }
            }
            hits as f64 / bootstrap_b as f64
        }
        AssessorKind::StudentT => student_t_probability(&pool.errors, spec.epsilon, num_unsensed),
        AssessorKind::Beta => {
            let successes = pool.errors.iter().filter(|&&e| e <= spec.epsilon).count();
            (1.0 + successes as f64) / (2.0 + pool.errors.len() as f64)
        }
    };
    Ok(Assessment {
        satisfied: probability >= spec.p,
        probability,
    })
}

/// `P(mean of num_unsensed new errors <= epsilon)` under the posterior
/// predictive of a normal model fitted to `errors`.
fn student_t_probability(errors: &[f64], epsilon: f64, num_unsensed: usize) -> f64 {
    if errors.len() < 2 {
        return 0.0;
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let scale = (var * (1.0 / n + 1.0 / num_unsensed as f64)).sqrt();
    if !(scale > 0.0) {
        return if mean <= epsilon { 1.0 } else { 0.0 };
    }
    let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("n >= 2");
    t.cdf((epsilon - mean) / scale)
}
