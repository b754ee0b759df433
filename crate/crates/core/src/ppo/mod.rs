//! Clipped-surrogate policy optimization on the masked environments:
//! experience collection with one-step advantages, minibatch updates
//! over a FIFO replay window, and the training loop with periodic
//! greedy evaluation.

mod train;
mod update;

pub use train::{evaluate_policy, train, EpisodeLog, EvalSnapshot, TrainResult};
pub use update::{update_policy, UpdateStats};

use crate::envs::{ActionMask, EnvError, EnvState, Environment, Observation};
use crate::nn::{actor_probs, critic_value, NnError, PolicyParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NnError),
    #[error("config: {0}")]
    Config(String),
}

/// Training hyperparameters. Serializable so a run config file can
/// carry them; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Discount on the bootstrapped next value.
    pub gamma: f64,
    /// Half-width of the surrogate's trust band around ratio 1.
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    /// Inverse-time decay rate: lr(k) = lr / (1 + decay * k) at the
    /// k-th optimizer step.
    pub lr_decay: f64,
    pub epochs_per_episode: usize,
    pub batch_size: usize,
    /// FIFO replay window measured in transitions.
    pub buffer_capacity: usize,
    pub episodes: usize,
    /// Greedy evaluation cadence, in episodes.
    pub eval_every: usize,
    /// Distribution sample indices held out for evaluation. Kept far
    /// from the training indices (which count up from zero).
    pub eval_seeds: Vec<u64>,
    /// Weight on the entropy bonus; zero leaves the surrogate pure.
    pub entropy_coef: f64,
    /// Center and scale advantages once per update.
    pub normalize_advantages: bool,
    /// Drop the replay window each episode instead of FIFO eviction.
    pub clear_buffer: bool,
    /// Stop once the evaluation mean is within this relative gap of a
    /// caller-provided reference (see `train`'s `eval_refs`).
    pub stop_gap: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            clip_epsilon: 0.2,
            learning_rate: 1e-4,
            lr_decay: 0.001,
            epochs_per_episode: 20,
            batch_size: 256,
            buffer_capacity: 1000,
            episodes: 300,
            eval_every: 10,
            eval_seeds: (1_000_000..1_000_008).collect(),
            entropy_coef: 0.0,
            normalize_advantages: true,
            clear_buffer: false,
            stop_gap: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let fail = |msg: String| Err(PpoError::Config(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.clip_epsilon > 0.0) {
            return fail(format!("clip_epsilon must be positive, got {}", self.clip_epsilon));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lr_decay >= 0.0 && self.lr_decay.is_finite()) {
            return fail(format!("lr_decay must be non-negative, got {}", self.lr_decay));
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return fail(format!("entropy_coef must be non-negative, got {}", self.entropy_coef));
        }
        for (name, v) in [
            ("epochs_per_episode", self.epochs_per_episode),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("episodes", self.episodes),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if let Some(g) = self.stop_gap {
            if !(g >= 0.0 && g.is_finite()) {
                return fail(format!("stop_gap must be non-negative, got {g}"));
            }
        }
        Ok(())
    }
}

/// One transition as the update consumes it. `advantage` and
/// `return_target` are frozen at collection time from the critic that
/// acted, in reward-scale units (see [`collect_episode`]); `reward`
/// stays in environment units.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub obs: Observation,
    pub mask: ActionMask,
    pub action: usize,
    pub log_prob_old: f64,
    pub reward: f64,
    /// Successor observation; `None` when the step ended the episode.
    pub next_obs: Option<Observation>,
    pub value: f64,
    pub next_value: f64,
    pub advantage: f64,
    pub return_target: f64,
}

/// Bounded FIFO of transitions; pushing onto a full buffer evicts the
/// oldest entry.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    entries: VecDeque<Experience>,
    capacity: usize,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> RolloutBuffer {
        RolloutBuffer { entries: VecDeque::with_capacity(capacity.min(4096)), capacity }
    }

    pub fn push(&mut self, exp: Experience) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(exp);
    }

    pub fn extend(&mut self, exps: impl IntoIterator<Item = Experience>) {
        for e in exps {
            self.push(e);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Experience> {
        self.entries.iter_mut()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> &Experience {
        &self.entries[i]
    }
}

/// One-step bootstrapped advantage and value target:
/// `A = r + gamma * V(next) - V(now)`, `target = r + gamma * V(next)`.
pub fn one_step_advantage(reward: f64, gamma: f64, value: f64, next_value: f64) -> (f64, f64) {
    let return_target = reward + gamma * next_value;
    (return_target - value, return_target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Draw from the masked distribution (training).
    Sample,
    /// Highest-probability allowed action, ties to the lowest index
    /// (evaluation and solving).
    Greedy,
}

/// Choose an action for one observation. Returns the action and its
/// log probability under the current policy.
pub fn act(
    params: &PolicyParams,
    obs: &Observation,
    mask: &ActionMask,
    mode: DecodeMode,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, f64), PpoError> {
    let fwd = actor_probs(&params.shape, &params.actor, obs, mask)?;
    let action = match mode {
        DecodeMode::Greedy => {
            let mut best: Option<(f64, usize)> = None;
            for (j, &p) in fwd.probs.iter().enumerate() {
                if mask.allows(j) && best.map_or(true, |(bp, _)| p > bp) {
                    best = Some((p, j));
                }
            }
            best.expect("mask guarantees an allowed action").1
        }
        DecodeMode::Sample => {
            let u: f64 = rng.random();
            let mut cum = 0.0;
            let mut picked = None;
            let mut last_allowed = 0;
            for (j, &p) in fwd.probs.iter().enumerate() {
                if !mask.allows(j) {
                    continue;
                }
                last_allowed = j;
                cum += p;
                if u < cum {
                    picked = Some(j);
                    break;
                }
            }
            // Rounding can leave cum a hair under 1; the draw then
            // falls to the last allowed action.
            picked.unwrap_or(last_allowed)
        }
    };
    let log_prob = fwd.log_prob(action).expect("chosen action is allowed");
    Ok((action, log_prob))
}

/// Everything one episode produced: the transitions for the buffer and
/// the decode trace for building a solution.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub experiences: Vec<Experience>,
    /// (task, worker) pairs committed before the policy ran.
    pub preassigned: Vec<(usize, usize)>,
    /// (task, worker) pairs the policy chose, in decision order.
    pub decisions: Vec<(usize, usize)>,
    pub total_reward: f64,
    pub final_state: EnvState,
}

impl EpisodeRecord {
    /// Raw objective accumulated by the environment (cost, packed
    /// value, or distance).
    pub fn cumulative_cost(&self) -> f64 {
        self.final_state.cumulative_cost
    }

    pub fn workers_used(&self) -> usize {
        self.final_state.workers_used()
    }
}

/// Roll one full episode: reset, pre-assign, then act until done,
/// recording one [`Experience`] per policy decision. The critic value
/// of each successor state is computed once and reused as the next
/// step's own value.
///
/// `reward_scale` divides the rewards entering the stored advantages
/// and critic targets, so the critic regresses O(1) values even when
/// episode costs run in the thousands; `reward` and `total_reward`
/// stay in environment units. Pass 1.0 outside training.
pub fn collect_episode(
    env: &dyn Environment,
    params: &PolicyParams,
    gamma: f64,
    reward_scale: f64,
    mode: DecodeMode,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeRecord, PpoError> {
    if !(reward_scale.is_finite() && reward_scale > 0.0) {
        return Err(PpoError::Config(format!("reward_scale {reward_scale} must be positive")));
    }
    let mut state = env.reset();
    let preassigned = env.preassign(&mut state)?;
    let mut experiences = Vec::new();
    let mut decisions = Vec::new();
    let mut total_reward = 0.0;

    if !state.done {
        let mut obs = env.observe(&state);
        let mut value = critic_value(&params.shape, &params.critic, &obs)?;
        loop {
            let mask = env.action_mask(&state)?;
            let task = state.current_task().expect("live episode has an unfinished task");
            let (action, log_prob_old) = act(params, &obs, &mask, mode, rng)?;
            let outcome = env.step(&mut state, action)?;

            let (next_obs, next_value) = if outcome.done {
                (None, 0.0)
            } else {
                let o = env.observe(&state);
                let v = critic_value(&params.shape, &params.critic, &o)?;
                (Some(o), v)
            };
            let (advantage, return_target) =
                one_step_advantage(outcome.reward / reward_scale, gamma, value, next_value);
            experiences.push(Experience {
                obs,
                mask,
                action,
                log_prob_old,
                reward: outcome.reward,
                next_obs: next_obs.clone(),
                value,
                next_value,
                advantage,
                return_target,
            });
            decisions.push((task, action));
            total_reward += outcome.reward;

            if outcome.done {
                break;
            }
            obs = next_obs.expect("live episode produced a successor observation");
            value = next_value;
        }
    }

    Ok(EpisodeRecord { experiences, preassigned, decisions, total_reward, final_state: state })
}
