//! Finite-difference check of the TD-loss gradients on random networks and
//! random transition batches.

use cellsel::agents::Experience;
use cellsel::env::{Action, SelectionState};
use cellsel::neural::{gradient_check, Architecture, GradCheck, NetworkParams};
use cellsel::rng::{indexed_substream, SimRng, Stream};
use rand::Rng;
use serde::Serialize;

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSpec {
    pub arch: Architecture,
    pub batch: usize,
    pub gamma: f64,
    pub step: f64,
}

impl GradCheckSpec {
    pub fn new(cells: usize, hidden: usize, window: usize) -> Self {
        GradCheckSpec {
            arch: Architecture { cells, hidden, window },
            batch: 8,
            gamma: 0.9,
            step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedCheck {
    pub seed: u64,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

fn random_state(m: usize, k: usize, rng: &mut SimRng) -> SelectionState {
    let cols: Vec<Vec<bool>> = (0..k)
        .map(|_| (0..m).map(|_| rng.random::<f64>() < 0.4).collect())
        .collect();
    SelectionState::encode(&cols, m, k).expect("shape matches")
}

/// A batch of `n` transitions with random windows, actions and rewards.
pub fn random_batch(m: usize, k: usize, n: usize, rng: &mut SimRng) -> Vec<Experience> {
    (0..n)
        .map(|_| {
            let state = random_state(m, k, rng);
            let next_state = random_state(m, k, rng);
            let next_selectable = next_state.current().iter().map(|b| !b).collect();
            Experience {
                state,
                action: Action {
                    cell: rng.random_range(0..m),
                },
                reward: if rng.random::<bool>() { m as f64 - 1.0 } else { -1.0 },
                next_state,
                next_selectable,
                terminal: rng.random::<f64>() < 0.2,
            }
        })
        .collect()
}

/// Online and target networks plus a batch, all drawn from `seed`.
pub fn check_seed(spec: &GradCheckSpec, seed: u64) -> Result<SeedCheck> {
    let mut rng = indexed_substream(seed, Stream::Init, 7);
    let online = NetworkParams::init(spec.arch, &mut rng);
    let target = NetworkParams::init(spec.arch, &mut rng);
    let batch = random_batch(spec.arch.cells, spec.arch.window, spec.batch, &mut rng);
    let GradCheck {
        max_rel_error,
        worst_index,
        checked,
    } = gradient_check(&online, &target, &batch, spec.gamma, spec.step)?;
    Ok(SeedCheck {
        seed,
        max_rel_error,
        worst_index,
        checked,
    })
}

pub fn check_seeds(spec: &GradCheckSpec, seeds: impl IntoIterator<Item = u64>) -> Result<Vec<SeedCheck>> {
    seeds.into_iter().map(|s| check_seed(spec, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_network_passes() {
        let spec = GradCheckSpec::new(5, 4, 2);
        let checks = check_seeds(&spec, 0..3).unwrap();
        let count = NetworkParams::param_count(&spec.arch);
        for c in checks {
            assert_eq!(c.checked, count);
            assert!(c.max_rel_error < 1e-4, "{c:?}");
        }
    }
}
