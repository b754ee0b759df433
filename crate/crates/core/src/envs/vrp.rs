//! Routing environment: serve customers in index order, paying the leg
//! from the chosen vehicle's position (depot when fresh) and, at
//! episode end, each used vehicle's return leg to the depot.

use super::{
    check_action, encode, mask_rules, ActionMask, EnvError, EnvState, Environment, Observation,
    RewardConfig, StepOutcome,
};
use crate::instances::{TimeUnits, VrpInstance};

pub struct VrpEnv {
    inst: VrpInstance,
    rcfg: RewardConfig,
    max_cap: TimeUnits,
}

impl VrpEnv {
    pub fn new(inst: VrpInstance, rcfg: RewardConfig) -> Result<Self, EnvError> {
        inst.validate()?;
        rcfg.validate()?;
        let max_cap = inst.max_capacity();
        Ok(VrpEnv { inst, rcfg, max_cap })
    }

    pub fn instance(&self) -> &VrpInstance {
        &self.inst
    }

    /// Charge every moved vehicle's way back to the depot. Runs once,
    /// on the transition into the terminal state.
    fn charge_depot_return(&self, state: &mut EnvState) -> f64 {
        if !self.rcfg.depot_return {
            return 0.0;
        }
        let total: f64 = state
            .positions
            .iter()
            .flatten()
            .map(|p| p.distance(self.inst.depot))
            .sum();
        state.cumulative_cost += total;
        total
    }
}

impl Environment for VrpEnv {
    fn task_count(&self) -> usize {
        self.inst.customers.len()
    }

    fn action_count(&self) -> usize {
        self.inst.vehicles.len()
    }

    fn reset(&self) -> EnvState {
        let mut state = EnvState::fresh(
            self.inst.customers.iter().map(|c| c.demand).collect(),
            self.inst.vehicles.clone(),
        );
        state.positions = vec![None; self.inst.vehicles.len()];
        state
    }

    fn preassign(&self, state: &mut EnvState) -> Result<Vec<(usize, usize)>, EnvError> {
        let mut committed = Vec::new();
        for t in 0..state.remaining.len() {
            if state.remaining[t] != self.max_cap || state.remaining[t] == 0 {
                continue;
            }
            // Every fresh vehicle starts at the depot, so they are all
            // equally close; take the first.
            let vehicle = (0..state.capacities.len())
                .find(|&j| !state.used[j] && state.capacities[j] == self.max_cap);
            let Some(j) = vehicle else {
                return Err(EnvError::Infeasible(format!(
                    "customer {t} needs a full fresh vehicle and none remains"
                )));
            };
            let at = self.inst.customers[t].at;
            state.capacities[j] -= state.remaining[t];
            state.remaining[t] = 0;
            state.used[j] = true;
            state.positions[j] = Some(at);
            state.cumulative_cost += self.inst.depot.distance(at);
            committed.push((t, j));
        }
        state.done = state.remaining.iter().all(|&r| r == 0);
        if state.done {
            self.charge_depot_return(state);
        }
        Ok(committed)
    }

    fn action_mask(&self, state: &EnvState) -> Result<ActionMask, EnvError> {
        let Some(current) = state.current_task() else {
            return Err(EnvError::InvalidAction("episode is done".into()));
        };
        mask_rules(state, current, |_| true)
    }

    fn step(&self, state: &mut EnvState, action: usize) -> Result<StepOutcome, EnvError> {
        let mask = self.action_mask(state)?;
        check_action(&mask, action)?;
        let t = state.current_task().expect("mask succeeded, customer exists");
        let from = state.positions[action].unwrap_or(self.inst.depot);
        let at = self.inst.customers[t].at;
        let leg = from.distance(at);
        let activated = !state.used[action];
        state.capacities[action] -= state.remaining[t];
        state.remaining[t] = 0;
        state.used[action] = true;
        state.positions[action] = Some(at);
        state.cumulative_cost += leg;
        state.last_completed = Some(t);
        state.clock += 1;
        state.done = state.remaining.iter().all(|&r| r == 0);
        let mut cost = leg;
        if state.done {
            cost += self.charge_depot_return(state);
        }
        let reward = -cost - self.rcfg.worker_penalty * f64::from(u8::from(activated));
        Ok(StepOutcome { reward, done: state.done, cost, activated })
    }

    fn observe(&self, state: &EnvState) -> Observation {
        encode(state, self.task_count(), self.max_cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{Customer, Point};

    fn inst(customers: &[((f64, f64), u32)], vehicles: &[u32]) -> VrpInstance {
        VrpInstance {
            depot: Point { x: 0.0, y: 0.0 },
            customers: customers
                .iter()
                .map(|&((x, y), demand)| Customer { at: Point { x, y }, demand })
                .collect(),
            vehicles: vehicles.to_vec(),
            seed: 0,
        }
    }

    #[test]
    fn first_leg_starts_at_the_depot() {
        let env = VrpEnv::new(inst(&[((3.0, 4.0), 5)], &[15, 15]), RewardConfig::default())
            .unwrap();
        let mut state = env.reset();
        let out = env.step(&mut state, 0).unwrap();
        // 5 out, 5 back: the single step carries both legs.
        assert_eq!(out.reward, -10.0);
        assert_eq!(state.cumulative_cost, 10.0);
        assert_eq!(state.capacities, vec![10, 15]);
        assert_eq!(state.positions[0], Some(Point { x: 3.0, y: 4.0 }));
    }

    #[test]
    fn repeat_visit_to_same_location_costs_nothing_extra() {
        let env = VrpEnv::new(
            inst(&[((3.0, 4.0), 5), ((3.0, 4.0), 5)], &[15, 15]),
            RewardConfig::default(),
        )
        .unwrap();
        let mut state = env.reset();
        assert_eq!(env.step(&mut state, 0).unwrap().reward, -5.0);
        // Second customer sits where the vehicle already is; only the
        // terminal return leg remains.
        assert_eq!(env.step(&mut state, 0).unwrap().reward, -5.0);
        assert_eq!(state.cumulative_cost, 10.0);
    }

    #[test]
    fn no_depot_return_flag_drops_the_final_legs() {
        let env = VrpEnv::new(
            inst(&[((3.0, 4.0), 5)], &[15, 15]),
            RewardConfig { depot_return: false, ..RewardConfig::default() },
        )
        .unwrap();
        let mut state = env.reset();
        assert_eq!(env.step(&mut state, 0).unwrap().reward, -5.0);
        assert_eq!(state.cumulative_cost, 5.0);
    }

    #[test]
    fn two_vehicles_each_pay_their_own_return() {
        let env = VrpEnv::new(
            inst(&[((3.0, 4.0), 10), ((0.0, 7.0), 10)], &[15, 15]),
            RewardConfig::default(),
        )
        .unwrap();
        let mut state = env.reset();
        env.step(&mut state, 0).unwrap();
        // Vehicle 0 lacks capacity for customer 1 (10 > 5 left).
        let mask = env.action_mask(&state).unwrap();
        assert_eq!(mask.allowed, vec![false, true]);
        let out = env.step(&mut state, 1).unwrap();
        assert!(out.done);
        // legs: 5 + 7 out, 5 + 7 back.
        assert!((state.cumulative_cost - 24.0).abs() < 1e-12);
        assert_eq!(state.workers_used(), 2);
    }

    #[test]
    fn preassign_routes_full_demand_customers() {
        let env = VrpEnv::new(
            inst(&[((3.0, 4.0), 15), ((1.0, 0.0), 2)], &[15, 15, 15]),
            RewardConfig::default(),
        )
        .unwrap();
        let mut state = env.reset();
        let committed = env.preassign(&mut state).unwrap();
        assert_eq!(committed, vec![(0, 0)]);
        assert_eq!(state.capacities[0], 0);
        assert_eq!(state.cumulative_cost, 5.0);
        assert!(!state.done);
    }

    #[test]
    fn preassign_finishing_the_episode_charges_returns() {
        let env = VrpEnv::new(inst(&[((3.0, 4.0), 15)], &[15]), RewardConfig::default()).unwrap();
        let mut state = env.reset();
        env.preassign(&mut state).unwrap();
        assert!(state.done);
        assert_eq!(state.cumulative_cost, 10.0);
    }

    #[test]
    fn empty_route_has_zero_distance() {
        let env = VrpEnv::new(inst(&[], &[15, 15]), RewardConfig::default()).unwrap();
        let state = env.reset();
        assert!(state.done);
        assert_eq!(state.cumulative_cost, 0.0);
    }
}
