//! Cell-selection policies and their learners.
//!
//! Baselines pick uniformly at random or by committee disagreement. The
//! learned policies read Q-values from a table ([`tabular`]) or from the
//! recurrent network ([`drqn`]) and act greedily over selectable cells.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::completion::{committee_infer, Committee};
use crate::config::Explore;
use crate::env::{argmax, mask_q, Action, Policy, SelectionState, SensingEnv};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub mod drqn;
pub mod tabular;

pub use drqn::{
    drqn_select, fine_tune, train_drqn, DrqnLearner, DrqnOutcome, DrqnPolicy, NetConfig, ReplayConfig, ReplayMemory,
};
pub use tabular::{tabular_update, train_tabular, QTable, TabularOutcome, TabularPolicy};

/// One transition `<S, A, R, S'>`. `next_selectable` is the action mask of
/// `S'`; `terminal` marks the last step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: SelectionState,
    pub action: Action,
    pub reward: f64,
    pub next_state: SelectionState,
    pub next_selectable: Vec<bool>,
    pub terminal: bool,
}

/// How many episodes (and optionally environment steps) a learner may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub episodes: usize,
    #[serde(default)]
    pub max_steps: Option<usize>,
}

impl Budget {
    pub fn episodes(episodes: usize) -> Self {
        Budget {
            episodes,
            max_steps: None,
        }
    }
}

/// One line of a training progress log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Environment steps taken so far, over all episodes.
    pub step: usize,
    pub delta: f64,
    /// Mean TD loss of the episode's gradient steps, or the largest Q change
    /// for the tabular learner.
    pub loss: Option<f64>,
    pub episode_return: f64,
    pub selected_per_cycle: f64,
}

fn selectable_cells(selectable: &[bool]) -> Vec<usize> {
    selectable
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| s.then_some(i))
        .collect()
}

/// Uniform pick among selectable cells.
pub fn random_select(selectable: &[bool], rng: &mut SimRng) -> Result<Action> {
    let cells = selectable_cells(selectable);
    if cells.is_empty() {
        return Err(Error::AllMasked);
    }
    Ok(Action {
        cell: cells[rng.random_range(0..cells.len())],
    })
}

/// Population variance of each cell's committee predictions.
pub fn committee_variance(predictions: &[Vec<f64>]) -> Vec<f64> {
    let m = predictions.first().map_or(0, Vec::len);
    let n = predictions.len() as f64;
    (0..m)
        .map(|i| {
            let mean = predictions.iter().map(|p| p[i]).sum::<f64>() / n;
            predictions.iter().map(|p| (p[i] - mean).powi(2)).sum::<f64>() / n
        })
        .collect()
}

/// Selectable cell with the largest committee disagreement (ties to the
/// lowest index). With nothing sensed yet the pick is random.
pub fn qbc_select(env: &SensingEnv<'_>, committee: &Committee, rng: &mut SimRng) -> Result<Action> {
    let selectable = env.selectable();
    if env.selected().is_empty() {
        return random_select(&selectable, rng);
    }
    let window = env.window()?;
    let cols = committee_infer(&window, env.coords(), committee)?;
    let preds: Vec<Vec<f64>> = cols.into_iter().map(|c| c.values).collect();
    variance_pick(&preds, &selectable)
}

fn variance_pick(predictions: &[Vec<f64>], selectable: &[bool]) -> Result<Action> {
    let var = committee_variance(predictions);
    let masked = mask_q(&var, selectable)?;
    argmax(&masked).map(|cell| Action { cell }).ok_or(Error::AllMasked)
}

/// With probability `1 - delta` the best masked action (ties to the lowest
/// index); otherwise a random one drawn per `explore`.
pub fn delta_greedy(q_masked: &[f64], delta: f64, explore: Explore, rng: &mut SimRng) -> Result<Action> {
    let best = argmax(q_masked).ok_or(Error::AllMasked)?;
    if delta > 0.0 && rng.random::<f64>() < delta {
        let mut pool: Vec<usize> = q_masked
            .iter()
            .enumerate()
            .filter_map(|(i, &q)| (q != f64::NEG_INFINITY && !q.is_nan()).then_some(i))
            .collect();
        if explore == Explore::OtherOnly && pool.len() > 1 {
            pool.retain(|&i| i != best);
        }
        return Ok(Action {
            cell: pool[rng.random_range(0..pool.len())],
        });
    }
    Ok(Action { cell: best })
}

pub struct RandomPolicy {
    pub rng: SimRng,
}

impl Policy for RandomPolicy {
    fn select(&mut self, env: &SensingEnv<'_>) -> Result<Action> {
        random_select(&env.selectable(), &mut self.rng)
    }
}

pub struct QbcPolicy {
    pub committee: Committee,
    pub rng: SimRng,
}

impl Policy for QbcPolicy {
    fn select(&mut self, env: &SensingEnv<'_>) -> Result<Action> {
        qbc_select(env, &self.committee, &mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    fn frequencies(draws: usize, mut f: impl FnMut() -> usize, m: usize) -> Vec<f64> {
        let mut counts = vec![0usize; m];
        for _ in 0..draws {
            counts[f()] += 1;
        }
        counts.iter().map(|&c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn random_select_is_uniform_over_selectable() {
        let mut rng = substream(5, Stream::Agent);
        let sel = [true, false, true, true, false, true];
        let freq = frequencies(10_000, || random_select(&sel, &mut rng).unwrap().cell, 6);
        for (i, f) in freq.iter().enumerate() {
            if sel[i] {
                assert!((f - 0.25).abs() <= 0.02, "cell {i}: {f}");
            } else {
                assert_eq!(*f, 0.0);
            }
        }
        let only = [false, false, true];
        for _ in 0..50 {
            assert_eq!(random_select(&only, &mut rng).unwrap().cell, 2);
        }
        assert!(matches!(random_select(&[false; 3], &mut rng), Err(Error::AllMasked)));
    }

    #[test]
    fn delta_greedy_branches() {
        let mut rng = substream(6, Stream::Agent);
        let q = [1.0, 0.5, 3.0, -2.0, 0.0];
        for _ in 0..100 {
            assert_eq!(delta_greedy(&q, 0.0, Explore::OtherOnly, &mut rng).unwrap().cell, 2);
        }
        let freq = frequencies(10_000, || delta_greedy(&q, 1.0, Explore::OtherOnly, &mut rng).unwrap().cell, 5);
        assert_eq!(freq[2], 0.0);
        for i in [0, 1, 3, 4] {
            assert!((freq[i] - 0.25).abs() <= 0.02, "cell {i}: {}", freq[i]);
        }
        let uni = frequencies(10_000, || delta_greedy(&q, 1.0, Explore::Uniform, &mut rng).unwrap().cell, 5);
        assert!(uni.iter().all(|f| (f - 0.2).abs() <= 0.02), "{uni:?}");
        let single = [f64::NEG_INFINITY, 7.0, f64::NEG_INFINITY];
        assert_eq!(delta_greedy(&single, 1.0, Explore::OtherOnly, &mut rng).unwrap().cell, 1);
    }

    #[test]
    fn variance_pick_examples() {
        // identical members except at cell 7
        let base: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut other = base.clone();
        other[7] += 1.0;
        let sel = vec![true; 10];
        assert_eq!(variance_pick(&[base.clone(), base.clone(), other], &sel).unwrap().cell, 7);
        let mut sel0 = sel.clone();
        sel0[0] = false;
        assert_eq!(variance_pick(&[base.clone(), base.clone()], &sel0).unwrap().cell, 1);

        // hand-computed: members a, b, c on six cells
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = vec![1.0, 2.5, 3.0, 2.0, 5.0, 6.0];
        let c = vec![1.0, 1.5, 3.0, 6.0, 8.0, 6.0];
        // cell 3: {4,2,6} mean 4 -> var 8/3; cell 4: {5,5,8} mean 6 -> var 2
        let v = committee_variance(&[a.clone(), b.clone(), c.clone()]);
        assert!((v[3] - 8.0 / 3.0).abs() < 1e-12);
        assert!((v[4] - 2.0).abs() < 1e-12);
        assert!((v[1] - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(variance_pick(&[a.clone(), b.clone(), c.clone()], &[true; 6]).unwrap().cell, 3);
        let mut no3 = [true; 6];
        no3[3] = false;
        assert_eq!(variance_pick(&[a, b, c], &no3).unwrap().cell, 4);
    }
}
