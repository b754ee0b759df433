//! Sequential decision processes over problem instances.
//!
//! All three environments share one protocol: tasks (items, customers)
//! are served in ascending index order; the action is which worker
//! (bin, vehicle) takes the current one; infeasible actions are masked;
//! rewards combine the per-step objective with a penalty for activating
//! a previously unused worker.

mod ap;
mod bin;
mod vrp;

pub use ap::ApEnv;
pub use bin::BinEnv;
pub use vrp::VrpEnv;

use crate::instances::{Instance, InstanceError, Point, TimeUnits};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("dead end: no feasible action for the current task")]
    DeadEnd,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Reward shaping knobs. `worker_penalty` is charged once per worker on
/// its first use, steering toward few workers without dominating cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub worker_penalty: f64,
    /// Charge each used vehicle's return leg to the depot at episode
    /// end (routing only).
    pub depot_return: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { worker_penalty: 0.0, depot_return: true }
    }
}

impl RewardConfig {
    /// Default penalty scaled to the instance: the mean of one
    /// assignment's objective contribution, so opening a worker costs
    /// about as much as one typical step.
    pub fn default_for(inst: &Instance) -> RewardConfig {
        let worker_penalty = match inst {
            Instance::Ap(i) => i.mean_cost(),
            Instance::Bin(i) => i.mean_value(),
            Instance::Vrp(i) => i.mean_distance(),
        };
        RewardConfig { worker_penalty, ..RewardConfig::default() }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.worker_penalty.is_finite() && self.worker_penalty >= 0.0) {
            return Err(EnvError::Infeasible(format!(
                "worker_penalty must be finite and non-negative, got {}",
                self.worker_penalty
            )));
        }
        Ok(())
    }
}

/// Mutable episode state. `remaining` holds task efforts (item weights,
/// customer demands); a zero entry is completed. `cumulative_cost`
/// accumulates the raw objective: cost for assignment, packed value
/// for bin packing, distance for routing.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub remaining: Vec<TimeUnits>,
    pub capacities: Vec<TimeUnits>,
    pub clock: usize,
    pub last_completed: Option<usize>,
    pub used: Vec<bool>,
    pub cumulative_cost: f64,
    pub done: bool,
    /// Routing only: where each vehicle sits; fresh vehicles are at the
    /// depot.
    pub positions: Vec<Option<Point>>,
    /// Bin packing only: items that fit no bin and were passed over.
    pub skipped: Vec<bool>,
}

impl EnvState {
    fn fresh(remaining: Vec<TimeUnits>, capacities: Vec<TimeUnits>) -> EnvState {
        let m = capacities.len();
        let done = remaining.iter().all(|&r| r == 0);
        EnvState {
            remaining,
            capacities,
            clock: 0,
            last_completed: None,
            used: vec![false; m],
            cumulative_cost: 0.0,
            done,
            positions: Vec::new(),
            skipped: Vec::new(),
        }
    }

    /// Lowest-index unfinished task; the one the next action serves.
    pub fn current_task(&self) -> Option<usize> {
        self.remaining.iter().position(|&r| r > 0)
    }

    pub fn workers_used(&self) -> usize {
        self.used.iter().filter(|&&u| u).count()
    }
}

/// Feasible-action indicator over the worker axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask {
    pub allowed: Vec<bool>,
}

impl ActionMask {
    pub fn any(&self) -> bool {
        self.allowed.iter().any(|&a| a)
    }

    pub fn allows(&self, action: usize) -> bool {
        self.allowed.get(action).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }
}

/// Per-step result. `cost` is the raw objective increment (assignment
/// cost, item value, leg distance) before the worker penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub cost: f64,
    pub activated: bool,
}

/// What the policy sees: the effort/capacity sequence plus the clock
/// and last-completed-task scalars, all normalized to about [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub seq: Vec<f64>,
    pub scalars: Vec<f64>,
}

pub const SCALAR_INPUTS: usize = 2;

/// One environment over one instance. Implementations are pure over
/// (instance, state); all episode data lives in the [`EnvState`] value.
pub trait Environment: Send + Sync {
    /// Tasks / items / customers.
    fn task_count(&self) -> usize;
    /// Workers / bins / vehicles; the policy's action count.
    fn action_count(&self) -> usize;

    fn reset(&self) -> EnvState;

    /// Commit every task whose effort equals the full default capacity
    /// to a fresh worker before the policy runs. Returns the committed
    /// (task, worker) pairs.
    fn preassign(&self, state: &mut EnvState) -> Result<Vec<(usize, usize)>, EnvError>;

    /// Feasibility mask for the current task. Errors with
    /// [`EnvError::DeadEnd`] when nothing is allowed.
    fn action_mask(&self, state: &EnvState) -> Result<ActionMask, EnvError>;

    /// Serve the current task with `action`. Masked or out-of-range
    /// actions error; they are never silently accepted.
    fn step(&self, state: &mut EnvState, action: usize) -> Result<StepOutcome, EnvError>;

    fn observe(&self, state: &EnvState) -> Observation;
}

/// Build the environment matching an instance kind.
pub fn make_env(inst: &Instance, rcfg: RewardConfig) -> Result<Box<dyn Environment>, EnvError> {
    Ok(match inst {
        Instance::Ap(i) => Box::new(ApEnv::new(i.clone(), rcfg)?),
        Instance::Bin(i) => Box::new(BinEnv::new(i.clone(), rcfg)?),
        Instance::Vrp(i) => Box::new(VrpEnv::new(i.clone(), rcfg)?),
    })
}

/// Shared mask rules: a worker is allowed iff it has capacity left,
/// can hold the smallest unfinished task, can hold the current task,
/// and passes the kind-specific eligibility test.
fn mask_rules(
    state: &EnvState,
    current: usize,
    eligible: impl Fn(usize) -> bool,
) -> Result<ActionMask, EnvError> {
    let min_remaining = state
        .remaining
        .iter()
        .copied()
        .filter(|&r| r > 0)
        .min()
        .expect("mask_rules requires an unfinished task");
    let need = state.remaining[current];
    let allowed = state
        .capacities
        .iter()
        .enumerate()
        .map(|(j, &cap)| cap > 0 && cap >= min_remaining && cap >= need && eligible(j))
        .collect();
    let mask = ActionMask { allowed };
    if mask.any() {
        Ok(mask)
    } else {
        Err(EnvError::DeadEnd)
    }
}

/// Shared step preflight: episode must be live and the action unmasked.
fn check_action(mask: &ActionMask, action: usize) -> Result<(), EnvError> {
    if action >= mask.len() {
        return Err(EnvError::InvalidAction(format!(
            "action {action} out of range for {} workers",
            mask.len()
        )));
    }
    if !mask.allows(action) {
        return Err(EnvError::InvalidAction(format!("action {action} is masked")));
    }
    Ok(())
}

/// Shared observation encoding: efforts and capacities normalized by
/// the largest initial capacity, plus clock/n and (last+1)/(n+1).
fn encode(state: &EnvState, task_count: usize, norm: TimeUnits) -> Observation {
    let norm = f64::from(norm.max(1));
    let seq = state
        .remaining
        .iter()
        .chain(state.capacities.iter())
        .map(|&v| f64::from(v) / norm)
        .collect();
    let clock = if task_count == 0 { 0.0 } else { state.clock as f64 / task_count as f64 };
    let last = match state.last_completed {
        Some(t) => (t as f64 + 1.0) / (task_count as f64 + 1.0),
        None => 0.0,
    };
    Observation { seq, scalars: vec![clock, last] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_ap_instance, GenConfig};

    #[test]
    fn default_reward_config_scales_to_instance() {
        let inst = Instance::Ap(generate_ap_instance(10, 7, &GenConfig::default()).unwrap());
        let rcfg = RewardConfig::default_for(&inst);
        assert!(rcfg.worker_penalty >= 10.0 && rcfg.worker_penalty <= 200.0);
        assert_eq!(rcfg.worker_penalty, rcfg.worker_penalty.round());
    }

    #[test]
    fn negative_penalty_rejected() {
        let rcfg = RewardConfig { worker_penalty: -1.0, ..RewardConfig::default() };
        assert!(rcfg.validate().is_err());
    }

    #[test]
    fn current_task_is_lowest_unfinished() {
        let mut state = EnvState::fresh(vec![0, 3, 2], vec![5, 5]);
        assert_eq!(state.current_task(), Some(1));
        state.remaining[1] = 0;
        assert_eq!(state.current_task(), Some(2));
        state.remaining[2] = 0;
        assert_eq!(state.current_task(), None);
    }
}
