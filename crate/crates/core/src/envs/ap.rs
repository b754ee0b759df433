//! Assignment environment: serve each task once, pay the cost-matrix
//! entry, never exceed worker capacities, respect class eligibility.

use super::{
    check_action, encode, mask_rules, ActionMask, EnvError, EnvState, Environment, Observation,
    RewardConfig, StepOutcome,
};
use crate::instances::{ApInstance, TimeUnits};

pub struct ApEnv {
    inst: ApInstance,
    rcfg: RewardConfig,
    max_cap: TimeUnits,
}

impl ApEnv {
    pub fn new(inst: ApInstance, rcfg: RewardConfig) -> Result<Self, EnvError> {
        inst.validate()?;
        rcfg.validate()?;
        let max_cap = inst.max_capacity();
        Ok(ApEnv { inst, rcfg, max_cap })
    }

    pub fn instance(&self) -> &ApInstance {
        &self.inst
    }

    fn eligible(&self, task: usize, worker: usize) -> bool {
        self.inst.tasks[task].eligibility.contains(&self.inst.workers[worker].class)
    }
}

impl Environment for ApEnv {
    fn task_count(&self) -> usize {
        self.inst.tasks.len()
    }

    fn action_count(&self) -> usize {
        self.inst.workers.len()
    }

    fn reset(&self) -> EnvState {
        EnvState::fresh(
            self.inst.tasks.iter().map(|t| t.effort).collect(),
            self.inst.workers.iter().map(|w| w.capacity).collect(),
        )
    }

    fn preassign(&self, state: &mut EnvState) -> Result<Vec<(usize, usize)>, EnvError> {
        let mut committed = Vec::new();
        for t in 0..state.remaining.len() {
            if state.remaining[t] != self.max_cap || state.remaining[t] == 0 {
                continue;
            }
            // Cheapest fresh worker of an eligible class; fresh means
            // untouched, so its whole capacity is available.
            let worker = (0..state.capacities.len())
                .filter(|&j| !state.used[j] && state.capacities[j] == self.max_cap)
                .filter(|&j| self.eligible(t, j))
                .min_by_key(|&j| self.inst.cost[t][j]);
            let Some(j) = worker else {
                return Err(EnvError::Infeasible(format!(
                    "task {t} needs a full fresh worker and none remains"
                )));
            };
            state.capacities[j] -= state.remaining[t];
            state.remaining[t] = 0;
            state.used[j] = true;
            state.cumulative_cost += f64::from(self.inst.cost[t][j]);
            committed.push((t, j));
        }
        state.done = state.remaining.iter().all(|&r| r == 0);
        Ok(committed)
    }

    fn action_mask(&self, state: &EnvState) -> Result<ActionMask, EnvError> {
        let Some(current) = state.current_task() else {
            return Err(EnvError::InvalidAction("episode is done".into()));
        };
        mask_rules(state, current, |j| self.eligible(current, j))
    }

    fn step(&self, state: &mut EnvState, action: usize) -> Result<StepOutcome, EnvError> {
        let mask = self.action_mask(state)?;
        check_action(&mask, action)?;
        let t = state.current_task().expect("mask succeeded, task exists");
        let cost = f64::from(self.inst.cost[t][action]);
        let activated = !state.used[action];
        state.capacities[action] -= state.remaining[t];
        state.remaining[t] = 0;
        state.used[action] = true;
        state.cumulative_cost += cost;
        state.last_completed = Some(t);
        state.clock += 1;
        state.done = state.remaining.iter().all(|&r| r == 0);
        let reward = -cost - self.rcfg.worker_penalty * f64::from(u8::from(activated));
        Ok(StepOutcome { reward, done: state.done, cost, activated })
    }

    fn observe(&self, state: &EnvState) -> Observation {
        encode(state, self.task_count(), self.max_cap)
    }
}
