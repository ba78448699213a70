//! Recurrent Q-network learner: experience replay, a frozen target network
//! synced every few updates, and transfer by fine-tuning.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::LearningParams;
use crate::env::{argmax, mask_q, Action, Policy, SelectionState, SensingEnv};
use crate::error::{Error, Result};
use crate::neural::{q_values, td_loss, Architecture, NetworkParams, Optimizer, OptimizerKind};
use crate::rng::{substream, SimRng, Stream};

use super::{delta_greedy, Budget, EpisodeLog, Experience};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: 64,
            optimizer: OptimizerKind::Adam,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub batch: usize,
    /// Stored transitions required before the first gradient step.
    pub warmup: usize,
    /// Gradient steps between target-network syncs.
    pub replace_iter: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            capacity: 10_000,
            batch: 32,
            warmup: 500,
            replace_iter: 200,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 || self.batch == 0 || self.replace_iter == 0 {
            return Err(Error::InvalidConfig(
                "replay capacity, batch and replace_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// FIFO ring buffer of transitions with seeded uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Experience>,
    rng: SimRng,
}

impl ReplayMemory {
    pub fn new(capacity: usize, rng: SimRng) -> Self {
        ReplayMemory {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    /// Stores `e`, returning the evicted oldest entry when full.
    pub fn push(&mut self, e: Experience) -> Option<Experience> {
        let evicted = if self.items.len() == self.capacity {
            self.items.pop_front()
        } else {
            None
        };
        self.items.push_back(e);
        evicted
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample_indices(&mut self, n: usize) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let len = self.items.len();
        Ok((0..n).map(|_| self.rng.random_range(0..len)).collect())
    }

    pub fn sample(&mut self, n: usize) -> Result<Vec<Experience>> {
        let idx = self.sample_indices(n)?;
        Ok(idx.into_iter().map(|i| self.items[i].clone()).collect())
    }
}

/// Online network, frozen target, optimizer state and replay memory.
pub struct DrqnLearner {
    online: NetworkParams,
    target: NetworkParams,
    optimizer: Optimizer,
    replay: ReplayMemory,
    cfg: ReplayConfig,
    lr: f64,
    gamma: f64,
    updates: usize,
}

impl DrqnLearner {
    /// Starts with `target = params`.
    pub fn new(params: NetworkParams, optimizer: OptimizerKind, cfg: ReplayConfig, lr: f64, gamma: f64, replay_rng: SimRng) -> Result<Self> {
        cfg.validate()?;
        let count = params.as_slice().len();
        Ok(DrqnLearner {
            target: params.clone(),
            online: params,
            optimizer: Optimizer::new(optimizer, count),
            replay: ReplayMemory::new(cfg.capacity, replay_rng),
            cfg,
            lr,
            gamma,
            updates: 0,
        })
    }

    pub fn online(&self) -> &NetworkParams {
        &self.online
    }

    pub fn target(&self) -> &NetworkParams {
        &self.target
    }

    pub fn replay(&self) -> &ReplayMemory {
        &self.replay
    }

    /// Gradient steps taken so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn into_params(self) -> NetworkParams {
        self.online
    }

    pub fn sync_target(&mut self) {
        self.target.as_mut_slice().copy_from_slice(self.online.as_slice());
    }

    /// Stores `e` and, once warm, takes one minibatch gradient step. Returns
    /// the batch loss when a step was taken.
    pub fn observe(&mut self, e: Experience) -> Result<Option<f64>> {
        self.replay.push(e);
        if self.replay.len() < self.cfg.warmup.max(1) {
            return Ok(None);
        }
        let batch = self.replay.sample(self.cfg.batch)?;
        let (loss, grads) = td_loss(&self.online, &self.target, &batch, self.gamma)?;
        self.optimizer.step(&mut self.online, &grads, self.lr)?;
        self.updates += 1;
        if self.updates % self.cfg.replace_iter == 0 {
            self.sync_target();
        }
        Ok(Some(loss))
    }
}

/// Greedy masked action of the network.
pub fn drqn_select(params: &NetworkParams, state: &SelectionState, selectable: &[bool]) -> Result<Action> {
    let q = mask_q(&q_values(params, state)?, selectable)?;
    argmax(&q).map(|cell| Action { cell }).ok_or(Error::AllMasked)
}

#[derive(Debug, Clone)]
pub struct DrqnOutcome {
    pub params: NetworkParams,
    pub log: Vec<EpisodeLog>,
}

fn arch_for(env: &SensingEnv<'_>, net: &NetConfig) -> Architecture {
    Architecture {
        cells: env.num_cells(),
        hidden: net.hidden,
        window: env.config().window_k,
    }
}

/// Trains a network on episodes from `make_env(episode)`. Starts from
/// `init` when given, else from a fresh seeded initialization. Exploration
/// and replay sampling use the `seed`'s agent and replay sub-streams.
pub fn train_drqn<'a>(
    mut make_env: impl FnMut(usize) -> Result<SensingEnv<'a>>,
    learning: &LearningParams,
    net: &NetConfig,
    replay: &ReplayConfig,
    budget: Budget,
    init: Option<NetworkParams>,
    seed: u64,
) -> Result<DrqnOutcome> {
    learning.validate()?;
    if budget.episodes == 0 {
        return match init {
            Some(params) => Ok(DrqnOutcome { params, log: Vec::new() }),
            None => Err(Error::InvalidConfig("training needs at least one episode".into())),
        };
    }
    let mut explore_rng = substream(seed, Stream::Agent);
    let mut learner: Option<DrqnLearner> = None;
    let mut init = init;
    let mut log = Vec::new();
    let mut steps = 0usize;
    'episodes: for episode in 0..budget.episodes {
        let mut env = make_env(episode)?;
        if learner.is_none() {
            let arch = arch_for(&env, net);
            let params = match init.take() {
                Some(p) if p.arch() == arch => p,
                Some(p) => {
                    return Err(Error::ArchitectureMismatch(format!(
                        "initial network {:?}, task needs {arch:?}",
                        p.arch()
                    )))
                }
                None => NetworkParams::init(arch, &mut substream(seed, Stream::Init)),
            };
            learner = Some(DrqnLearner::new(
                params,
                net.optimizer,
                *replay,
                learning.alpha,
                learning.gamma,
                substream(seed, Stream::Replay),
            )?);
        }
        let lrn = learner.as_mut().expect("initialized above");
        let delta = learning.delta_after(episode);
        let mut ret = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        while !env.is_finished() {
            if budget.max_steps.is_some_and(|cap| steps >= cap) {
                break 'episodes;
            }
            let state = env.state();
            let q = mask_q(&q_values(lrn.online(), &state)?, &env.selectable())?;
            let action = delta_greedy(&q, delta, learning.explore, &mut explore_rng)?;
            let out = env.step(action)?;
            let exp = Experience {
                state,
                action,
                reward: out.reward,
                next_selectable: env.selectable(),
                next_state: out.next_state,
                terminal: out.terminal,
            };
            if let Some(l) = lrn.observe(exp)? {
                loss_sum += l;
                loss_n += 1;
            }
            ret += out.reward;
            steps += 1;
        }
        let entry = EpisodeLog {
            episode,
            step: steps,
            delta,
            loss: (loss_n > 0).then(|| loss_sum / loss_n as f64),
            episode_return: ret,
            selected_per_cycle: env.trace().avg_selected(),
        };
        log::debug!(
            "drqn episode {episode}: return {ret:.1}, cells/cycle {:.2}, loss {:?}",
            entry.selected_per_cycle,
            entry.loss
        );
        log.push(entry);
    }
    let params = learner.expect("at least one episode ran").into_params();
    Ok(DrqnOutcome { params, log })
}

/// Continues training `source` on a target task. The online and target
/// networks both start from `source`, and exploration starts at 0.3.
pub fn fine_tune<'a>(
    source: &NetworkParams,
    make_env: impl FnMut(usize) -> Result<SensingEnv<'a>>,
    learning: &LearningParams,
    net: &NetConfig,
    replay: &ReplayConfig,
    budget: Budget,
    seed: u64,
) -> Result<DrqnOutcome> {
    if source.arch().hidden != net.hidden {
        return Err(Error::ArchitectureMismatch(format!(
            "source hidden size {}, configured {}",
            source.arch().hidden,
            net.hidden
        )));
    }
    let learning = LearningParams {
        delta_start: 0.3,
        delta_end: learning.delta_end.min(0.3),
        ..*learning
    };
    train_drqn(make_env, &learning, net, replay, budget, Some(source.clone()), seed)
}

/// Greedy policy over a trained network.
pub struct DrqnPolicy {
    pub params: NetworkParams,
}

impl Policy for DrqnPolicy {
    fn select(&mut self, env: &SensingEnv<'_>) -> Result<Action> {
        drqn_select(&self.params, &env.state(), &env.selectable())
    }
}
