//! Bin-packing environment: pack items in index order for their value;
//! an item no bin can hold is passed over with no reward instead of
//! ending the episode.

use super::{
    check_action, encode, mask_rules, ActionMask, EnvError, EnvState, Environment, Observation,
    RewardConfig, StepOutcome,
};
use crate::instances::{BinInstance, TimeUnits};

pub struct BinEnv {
    inst: BinInstance,
    rcfg: RewardConfig,
    max_cap: TimeUnits,
}

impl BinEnv {
    pub fn new(inst: BinInstance, rcfg: RewardConfig) -> Result<Self, EnvError> {
        inst.validate()?;
        rcfg.validate()?;
        let max_cap = inst.max_capacity();
        Ok(BinEnv { inst, rcfg, max_cap })
    }

    pub fn instance(&self) -> &BinInstance {
        &self.inst
    }

    fn raw_mask(&self, state: &EnvState, current: usize) -> Result<ActionMask, EnvError> {
        mask_rules(state, current, |_| true)
    }

    /// Pass over every current item that fits no bin, until one fits or
    /// the episode ends. Skipped items keep their value unpacked.
    fn resolve_skips(&self, state: &mut EnvState) {
        while let Some(t) = state.current_task() {
            if self.raw_mask(state, t).is_ok() {
                return;
            }
            state.remaining[t] = 0;
            state.skipped[t] = true;
        }
        state.done = true;
    }
}

impl Environment for BinEnv {
    fn task_count(&self) -> usize {
        self.inst.items.len()
    }

    fn action_count(&self) -> usize {
        self.inst.bins.len()
    }

    fn reset(&self) -> EnvState {
        let mut state = EnvState::fresh(
            self.inst.items.iter().map(|it| it.weight).collect(),
            self.inst.bins.clone(),
        );
        state.skipped = vec![false; self.inst.items.len()];
        self.resolve_skips(&mut state);
        state
    }

    fn preassign(&self, state: &mut EnvState) -> Result<Vec<(usize, usize)>, EnvError> {
        let mut committed = Vec::new();
        for t in 0..state.remaining.len() {
            if state.remaining[t] != self.max_cap || state.remaining[t] == 0 {
                continue;
            }
            // Item value is bin-independent, so any fresh bin is the
            // cheapest; take the first.
            let bin = (0..state.capacities.len())
                .find(|&j| !state.used[j] && state.capacities[j] == self.max_cap);
            let Some(j) = bin else {
                // Unpackable rather than infeasible: the episode goes
                // on, the item is passed over like any misfit.
                continue;
            };
            state.capacities[j] -= state.remaining[t];
            state.remaining[t] = 0;
            state.used[j] = true;
            state.cumulative_cost += f64::from(self.inst.items[t].value);
            committed.push((t, j));
        }
        state.done = state.remaining.iter().all(|&r| r == 0);
        if !state.done {
            self.resolve_skips(state);
        }
        Ok(committed)
    }

    fn action_mask(&self, state: &EnvState) -> Result<ActionMask, EnvError> {
        let Some(current) = state.current_task() else {
            return Err(EnvError::InvalidAction("episode is done".into()));
        };
        self.raw_mask(state, current)
    }

    fn step(&self, state: &mut EnvState, action: usize) -> Result<StepOutcome, EnvError> {
        let mask = self.action_mask(state)?;
        check_action(&mask, action)?;
        let t = state.current_task().expect("mask succeeded, item exists");
        let value = f64::from(self.inst.items[t].value);
        let activated = !state.used[action];
        state.capacities[action] -= state.remaining[t];
        state.remaining[t] = 0;
        state.used[action] = true;
        state.cumulative_cost += value;
        state.last_completed = Some(t);
        state.clock += 1;
        state.done = state.remaining.iter().all(|&r| r == 0);
        if !state.done {
            self.resolve_skips(state);
        }
        let reward = value - self.rcfg.worker_penalty * f64::from(u8::from(activated));
        Ok(StepOutcome { reward, done: state.done, cost: value, activated })
    }

    fn observe(&self, state: &EnvState) -> Observation {
        encode(state, self.task_count(), self.max_cap)
    }
}
