//! Tabular Q-learning over packed selection states.

use std::collections::HashMap;

use crate::config::LearningParams;
use crate::env::{argmax, mask_q, Action, Policy, SelectionState, SensingEnv, StateKey};
use crate::error::{Error, Result};
use crate::rng::SimRng;

use super::{delta_greedy, Budget, EpisodeLog};

/// Q-values per visited state; states never written read as all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    cells: usize,
    cap: usize,
    entries: HashMap<StateKey, Vec<f64>>,
}

impl QTable {
    /// `cap` bounds the number of stored states.
    pub fn new(cells: usize, cap: usize) -> Self {
        QTable {
            cells,
            cap,
            entries: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn q_values(&self, state: &SelectionState) -> Vec<f64> {
        self.entries
            .get(&state.key())
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.cells])
    }

    pub fn get(&self, state: &SelectionState, action: Action) -> f64 {
        self.entries.get(&state.key()).map_or(0.0, |q| q[action.cell])
    }

    /// `max_a' Q[S', a']` over selectable `a'`; 0 when nothing is selectable.
    pub fn value(&self, state: &SelectionState, selectable: &[bool]) -> f64 {
        let q = self.q_values(state);
        q.iter()
            .zip(selectable)
            .filter(|(_, &s)| s)
            .map(|(v, _)| *v)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
            .unwrap_or(0.0)
    }

    fn entry(&mut self, state: &SelectionState) -> Result<&mut Vec<f64>> {
        let key = state.key();
        if !self.entries.contains_key(&key) && self.entries.len() >= self.cap {
            return Err(Error::StateSpaceExplosion(self.cap));
        }
        Ok(self.entries.entry(key).or_insert_with(|| vec![0.0; self.cells]))
    }
}

/// `Q[S,A] <- (1 - alpha) Q[S,A] + alpha (R + gamma V(S'))`, with `V = 0`
/// for terminal transitions. Returns `|delta Q|`.
#[allow(clippy::too_many_arguments)]
pub fn tabular_update(
    table: &mut QTable,
    state: &SelectionState,
    action: Action,
    reward: f64,
    next_state: &SelectionState,
    next_selectable: &[bool],
    terminal: bool,
    alpha: f64,
    gamma: f64,
) -> Result<f64> {
    let v = if terminal {
        0.0
    } else {
        table.value(next_state, next_selectable)
    };
    let target = reward + gamma * v;
    let q = table.entry(state)?;
    let old = q[action.cell];
    let new = (1.0 - alpha) * old + alpha * target;
    if !new.is_finite() {
        return Err(Error::InvalidValue(format!("non-finite Q update {new}")));
    }
    q[action.cell] = new;
    Ok((new - old).abs())
}

#[derive(Debug, Clone)]
pub struct TabularOutcome {
    pub table: QTable,
    pub log: Vec<EpisodeLog>,
    /// An episode changed no entry by more than 1e-6.
    pub converged: bool,
}

/// Runs delta-greedy episodes from `make_env(episode)`, updating the table
/// after every step. Stops early once an episode's largest update is below
/// 1e-6.
pub fn train_tabular<'a>(
    mut make_env: impl FnMut(usize) -> Result<SensingEnv<'a>>,
    params: &LearningParams,
    budget: Budget,
    state_cap: usize,
    rng: &mut SimRng,
) -> Result<TabularOutcome> {
    params.validate()?;
    let mut table: Option<QTable> = None;
    let mut log = Vec::new();
    let mut steps = 0usize;
    let mut converged = false;
    'episodes: for episode in 0..budget.episodes {
        let mut env = make_env(episode)?;
        let tbl = table.get_or_insert_with(|| QTable::new(env.num_cells(), state_cap));
        let delta = params.delta_after(episode);
        let mut max_change = 0.0f64;
        let mut ret = 0.0;
        while !env.is_finished() {
            if budget.max_steps.is_some_and(|cap| steps >= cap) {
                break 'episodes;
            }
            let state = env.state();
            let q = mask_q(&tbl.q_values(&state), &env.selectable())?;
            let action = delta_greedy(&q, delta, params.explore, rng)?;
            let out = env.step(action)?;
            let next_sel = env.selectable();
            let change = tabular_update(
                tbl,
                &state,
                action,
                out.reward,
                &out.next_state,
                &next_sel,
                out.terminal,
                params.alpha,
                params.gamma,
            )?;
            max_change = max_change.max(change);
            ret += out.reward;
            steps += 1;
        }
        log.push(EpisodeLog {
            episode,
            step: steps,
            delta,
            loss: Some(max_change),
            episode_return: ret,
            selected_per_cycle: env.trace().avg_selected(),
        });
        log::debug!("tabular episode {episode}: return {ret}, max dQ {max_change:.3e}");
        if max_change < 1e-6 {
            converged = true;
            break;
        }
    }
    let table = table.ok_or_else(|| Error::InvalidConfig("tabular training needs at least one episode".into()))?;
    Ok(TabularOutcome { table, log, converged })
}

/// Greedy policy over a learned table.
pub struct TabularPolicy {
    pub table: QTable,
}

impl Policy for TabularPolicy {
    fn select(&mut self, env: &SensingEnv<'_>) -> Result<Action> {
        let q = mask_q(&self.table.q_values(&env.state()), &env.selectable())?;
        argmax(&q).map(|cell| Action { cell }).ok_or(Error::AllMasked)
    }
}
