//! Runtime invariant suites behind the `selftest` CLI command.
//!
//! Two sweeps, both seeded and sized by the caller: a masked-policy
//! soundness check (forbidden actions carry exactly zero probability,
//! distributions normalize, samples land on allowed actions) and an
//! assignment-environment conservation check (capacity bookkeeping,
//! step counts, reward/cost agreement). Violations come back as
//! errors carrying the offending state, so a clean run is the pass
//! signal.

use crate::envs::{make_env, EnvError, RewardConfig};
use crate::instances::{generate_instance, GenConfig, Instance, InstanceError, InstanceKind};
use crate::nn::{actor_probs, NetShape, NnError, PolicyParams};
use crate::ppo::{act, DecodeMode, PpoError};
use crate::seeds::{self, tags};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelftestError {
    #[error("invariant violated: {0}")]
    Violation(String),
    #[error("selftest configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Totals from a clean [`mask_soundness`] sweep.
#[derive(Debug, Clone, Copy)]
pub struct MaskSweepReport {
    pub states: usize,
    pub draws: usize,
    /// Largest observed |Σ probs − 1| over all checked states.
    pub max_sum_err: f64,
}

/// Sweep `states` random reachable states (all three families, random
/// sizes, random policies) and verify on each that masked actions have
/// probability exactly zero and the allowed mass sums to one within
/// 1e-9; additionally draw `draws` sampled actions in total and verify
/// every one is allowed. States are reached by sampling the policy
/// itself from the initial state, so the sweep only visits states a
/// rollout could produce.
pub fn mask_soundness(
    states: usize,
    draws: usize,
    seed: u64,
) -> Result<MaskSweepReport, SelftestError> {
    if states == 0 {
        return Err(SelftestError::Config("state count must be positive".into()));
    }
    let draws_per_state = draws.div_ceil(states);
    let kinds = [InstanceKind::Ap, InstanceKind::Bin, InstanceKind::Vrp];
    let mut checked = 0usize;
    let mut drawn = 0usize;
    let mut max_sum_err = 0.0f64;
    let mut round = 0u64;
    while checked < states {
        let mut rng = seeds::rng(seeds::mix_indexed(seed, tags::SELFTEST, round));
        round += 1;
        let kind = kinds[(round as usize) % kinds.len()];
        let n = rng.random_range(3..=8);
        let inst = generate_instance(kind, n, rng.random(), &GenConfig::default())?;
        let env = make_env(&inst, RewardConfig::default_for(&inst))?;
        let shape = NetShape {
            conv_filters: 4,
            hidden: 8,
            ..NetShape::for_instance(inst.task_count(), inst.worker_count())
        };
        let params = PolicyParams::init(shape, rng.random())?;
        let mut state = env.reset();
        env.preassign(&mut state)?;
        while !state.done && checked < states {
            let mask = env.action_mask(&state)?;
            let obs = env.observe(&state);
            if !mask.allowed.iter().any(|&a| a) {
                return Err(SelftestError::Violation(format!(
                    "{kind} n={n}: live state offers no allowed action"
                )));
            }
            let fwd = actor_probs(&params.shape, &params.actor, &obs, &mask)?;
            let mut sum = 0.0;
            for (j, &p) in fwd.probs.iter().enumerate() {
                if !mask.allows(j) && p != 0.0 {
                    return Err(SelftestError::Violation(format!(
                        "{kind} n={n}: masked action {j} has probability {p:e}"
                    )));
                }
                if mask.allows(j) && !(p >= 0.0) {
                    return Err(SelftestError::Violation(format!(
                        "{kind} n={n}: allowed action {j} has probability {p:e}"
                    )));
                }
                sum += p;
            }
            let err = (sum - 1.0).abs();
            if err > 1e-9 {
                return Err(SelftestError::Violation(format!(
                    "{kind} n={n}: probabilities sum to {sum} (err {err:e})"
                )));
            }
            max_sum_err = max_sum_err.max(err);
            checked += 1;
            for _ in 0..draws_per_state {
                let (a, _) = act(&params, &obs, &mask, DecodeMode::Sample, &mut rng)?;
                if !mask.allows(a) {
                    return Err(SelftestError::Violation(format!(
                        "{kind} n={n}: sampled forbidden action {a}"
                    )));
                }
                drawn += 1;
            }
            let (step_action, _) = act(&params, &obs, &mask, DecodeMode::Sample, &mut rng)?;
            env.step(&mut state, step_action)?;
        }
    }
    Ok(MaskSweepReport { states: checked, draws: drawn, max_sum_err })
}

/// Totals from a clean [`env_conservation`] sweep.
#[derive(Debug, Clone, Copy)]
pub struct ConservationReport {
    pub episodes: usize,
    pub steps: usize,
    /// Largest observed |−Σ rewards − Σ step costs| at zero penalty.
    pub max_reward_drift: f64,
}

/// Run `episodes` random-action assignment episodes (2..=`max_tasks`
/// tasks, zero worker penalty) and verify on each: the episode ends in
/// exactly `tasks − preassigned` steps, worker capacity is consumed by
/// exactly the efforts assigned to that worker, the accumulated cost
/// matches the instance cost matrix, and the negated reward sum equals
/// the cost added after preassignment.
pub fn env_conservation(
    episodes: usize,
    max_tasks: usize,
    seed: u64,
) -> Result<ConservationReport, SelftestError> {
    if episodes == 0 || max_tasks < 2 {
        return Err(SelftestError::Config(
            "need at least one episode over at least two tasks".into(),
        ));
    }
    let base = seeds::mix(seed, tags::SELFTEST);
    let mut steps_total = 0usize;
    let mut max_drift = 0.0f64;
    for e in 0..episodes {
        let mut rng = seeds::rng(seeds::mix_indexed(base, tags::EPISODE, e as u64));
        let n = rng.random_range(2..=max_tasks);
        let inst = generate_instance(InstanceKind::Ap, n, rng.random(), &GenConfig::default())?;
        let Instance::Ap(ap) = &inst else { unreachable!("requested an assignment instance") };
        let rcfg = RewardConfig { worker_penalty: 0.0, depot_return: true };
        let env = make_env(&inst, rcfg)?;
        let mut state = env.reset();
        let preassigned = env.preassign(&mut state)?;
        let preassign_cost = state.cumulative_cost;
        let mut worker_load = vec![0u64; ap.workers.len()];
        for &(t, j) in &preassigned {
            worker_load[j] += u64::from(ap.tasks[t].effort);
        }

        let tag = |msg: String| format!("episode {e} (n={n}, seed {}): {msg}", inst.seed());
        let mut steps = 0usize;
        let mut reward_sum = 0.0;
        while !state.done {
            let mask = env.action_mask(&state)?;
            let open: Vec<usize> = (0..mask.allowed.len()).filter(|&j| mask.allows(j)).collect();
            if open.is_empty() {
                return Err(SelftestError::Violation(tag("live state with empty mask".into())));
            }
            let t = state
                .current_task()
                .ok_or_else(|| SelftestError::Violation(tag("live state has no task".into())))?;
            let j = open[rng.random_range(0..open.len())];
            let before = state.capacities[j];
            let outcome = env.step(&mut state, j)?;
            steps += 1;
            reward_sum += outcome.reward;
            worker_load[j] += u64::from(ap.tasks[t].effort);
            let expected = f64::from(ap.cost[t][j]);
            if outcome.cost != expected {
                return Err(SelftestError::Violation(tag(format!(
                    "step cost {} but the cost matrix says {expected}",
                    outcome.cost
                ))));
            }
            if outcome.reward != -expected {
                return Err(SelftestError::Violation(tag(format!(
                    "reward {} at zero penalty, expected {}",
                    outcome.reward, -expected
                ))));
            }
            if state.capacities[j] + ap.tasks[t].effort != before {
                return Err(SelftestError::Violation(tag(format!(
                    "worker {j} capacity went {before} -> {} for effort {}",
                    state.capacities[j], ap.tasks[t].effort
                ))));
            }
        }
        if steps != n - preassigned.len() {
            return Err(SelftestError::Violation(tag(format!(
                "{steps} steps for {n} tasks with {} preassigned",
                preassigned.len()
            ))));
        }
        if state.remaining.iter().any(|&r| r != 0) {
            return Err(SelftestError::Violation(tag("done with unfinished tasks".into())));
        }
        for (j, w) in ap.workers.iter().enumerate() {
            let consumed = u64::from(w.capacity) - u64::from(state.capacities[j]);
            if consumed != worker_load[j] {
                return Err(SelftestError::Violation(tag(format!(
                    "worker {j} consumed {consumed} units but was assigned {}",
                    worker_load[j]
                ))));
            }
        }
        let expected_total: f64 = preassign_cost - reward_sum;
        if (state.cumulative_cost - expected_total).abs() > 1e-9 {
            return Err(SelftestError::Violation(tag(format!(
                "cumulative cost {} but preassign cost {preassign_cost} minus rewards gives \
                 {expected_total}",
                state.cumulative_cost
            ))));
        }
        if env.action_mask(&state).is_ok() {
            return Err(SelftestError::Violation(tag(
                "finished episode still hands out action masks".into(),
            )));
        }
        max_drift = max_drift.max((state.cumulative_cost - expected_total).abs());
        steps_total += steps;
    }
    Ok(ConservationReport { episodes, steps: steps_total, max_reward_drift: max_drift })
}
