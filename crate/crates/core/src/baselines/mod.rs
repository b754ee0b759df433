//! Reference solvers: exact branch-and-bound at small sizes, greedy
//! heuristics at any size. Both return [`Solution`] values that
//! revalidate against their instance.

mod ap;
mod bin;
mod vrp;

pub use ap::{exact_ap, greedy_ap, EXACT_AP_MAX_TASKS};
pub use bin::{exact_bin, greedy_bin, EXACT_BIN_MAX_ITEMS};
pub use vrp::{exact_vrp, greedy_vrp, EXACT_VRP_MAX_CUSTOMERS};

use crate::instances::{ApInstance, BinInstance, Instance, VrpInstance};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("instance too large for the exact solver: {0}")]
    TooLarge(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid solution: {0}")]
    Invalid(String),
}

/// Per-family assignment structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionDetail {
    /// Worker index per task.
    Assignment { worker_of_task: Vec<usize> },
    /// Bin index per item; `None` marks an unpacked item.
    Packing { bin_of_item: Vec<Option<usize>> },
    /// Customer visit order per vehicle; unused vehicles have empty
    /// routes.
    Routes { routes: Vec<Vec<usize>> },
}

/// A complete solution with its recomputable totals. `total_cost` is
/// the family objective: assignment cost, packed value, or travelled
/// distance (including depot returns when charged).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub detail: SolutionDetail,
    pub total_cost: f64,
    pub workers_used: usize,
    pub optimal: bool,
}

impl Solution {
    /// Assignment-family scalar objective: cost plus the per-worker
    /// activation penalty. This is the quantity the exact solver
    /// minimizes and the policy's reward sums to (negated).
    pub fn objective(&self, worker_penalty: f64) -> f64 {
        self.total_cost + worker_penalty * self.workers_used as f64
    }
}

/// Kind-dispatched exact solver. `worker_penalty` enters the
/// assignment objective; packing is lexicographic (value, then bins)
/// and routing minimizes distance, so both ignore it.
pub fn exact_solution(inst: &Instance, worker_penalty: f64) -> Result<Solution, BaselineError> {
    match inst {
        Instance::Ap(i) => exact_ap(i, worker_penalty),
        Instance::Bin(i) => exact_bin(i),
        Instance::Vrp(i) => exact_vrp(i),
    }
}

/// Kind-dispatched greedy solver, same penalty convention as
/// [`exact_solution`].
pub fn greedy_solution(inst: &Instance, worker_penalty: f64) -> Result<Solution, BaselineError> {
    match inst {
        Instance::Ap(i) => greedy_ap(i, worker_penalty),
        Instance::Bin(i) => greedy_bin(i),
        Instance::Vrp(i) => greedy_vrp(i),
    }
}

/// Check feasibility and recompute the totals of a solution against
/// its instance. Integer totals must match exactly; distances within
/// 1e-9.
pub fn validate_solution(
    inst: &Instance,
    sol: &Solution,
    depot_return: bool,
) -> Result<(), BaselineError> {
    match (inst, &sol.detail) {
        (Instance::Ap(i), SolutionDetail::Assignment { worker_of_task }) => {
            validate_ap(i, sol, worker_of_task)
        }
        (Instance::Bin(i), SolutionDetail::Packing { bin_of_item }) => {
            validate_bin(i, sol, bin_of_item)
        }
        (Instance::Vrp(i), SolutionDetail::Routes { routes }) => {
            validate_vrp(i, sol, routes, depot_return)
        }
        _ => Err(BaselineError::Invalid("solution kind does not match instance kind".into())),
    }
}

fn validate_ap(
    inst: &ApInstance,
    sol: &Solution,
    worker_of_task: &[usize],
) -> Result<(), BaselineError> {
    let n = inst.tasks.len();
    let m = inst.workers.len();
    if worker_of_task.len() != n {
        return Err(BaselineError::Invalid(format!(
            "{} assignments for {n} tasks",
            worker_of_task.len()
        )));
    }
    let mut load = vec![0u64; m];
    let mut cost = 0u64;
    for (t, &j) in worker_of_task.iter().enumerate() {
        if j >= m {
            return Err(BaselineError::Invalid(format!("task {t} assigned to worker {j} >= {m}")));
        }
        if !inst.tasks[t].eligibility.contains(&inst.workers[j].class) {
            return Err(BaselineError::Invalid(format!(
                "task {t} assigned to ineligible worker {j}"
            )));
        }
        load[j] += u64::from(inst.tasks[t].effort);
        cost += u64::from(inst.cost[t][j]);
    }
    for (j, &l) in load.iter().enumerate() {
        if l > u64::from(inst.workers[j].capacity) {
            return Err(BaselineError::Invalid(format!(
                "worker {j} loaded {l} over capacity {}",
                inst.workers[j].capacity
            )));
        }
    }
    if cost as f64 != sol.total_cost {
        return Err(BaselineError::Invalid(format!(
            "recomputed cost {cost} != reported {}",
            sol.total_cost
        )));
    }
    let used = load.iter().filter(|&&l| l > 0).count();
    if used != sol.workers_used {
        return Err(BaselineError::Invalid(format!(
            "recounted {used} workers != reported {}",
            sol.workers_used
        )));
    }
    Ok(())
}

fn validate_bin(
    inst: &BinInstance,
    sol: &Solution,
    bin_of_item: &[Option<usize>],
) -> Result<(), BaselineError> {
    let n = inst.items.len();
    let m = inst.bins.len();
    if bin_of_item.len() != n {
        return Err(BaselineError::Invalid(format!(
            "{} placements for {n} items",
            bin_of_item.len()
        )));
    }
    let mut load = vec![0u64; m];
    let mut value = 0u64;
    for (t, &slot) in bin_of_item.iter().enumerate() {
        let Some(j) = slot else { continue };
        if j >= m {
            return Err(BaselineError::Invalid(format!("item {t} placed in bin {j} >= {m}")));
        }
        load[j] += u64::from(inst.items[t].weight);
        value += u64::from(inst.items[t].value);
    }
    for (j, &l) in load.iter().enumerate() {
        if l > u64::from(inst.bins[j]) {
            return Err(BaselineError::Invalid(format!(
                "bin {j} loaded {l} over capacity {}",
                inst.bins[j]
            )));
        }
    }
    if value as f64 != sol.total_cost {
        return Err(BaselineError::Invalid(format!(
            "recomputed value {value} != reported {}",
            sol.total_cost
        )));
    }
    let used = load.iter().filter(|&&l| l > 0).count();
    if used != sol.workers_used {
        return Err(BaselineError::Invalid(format!(
            "recounted {used} bins != reported {}",
            sol.workers_used
        )));
    }
    Ok(())
}

fn validate_vrp(
    inst: &VrpInstance,
    sol: &Solution,
    routes: &[Vec<usize>],
    depot_return: bool,
) -> Result<(), BaselineError> {
    let n = inst.customers.len();
    let m = inst.vehicles.len();
    if routes.len() != m {
        return Err(BaselineError::Invalid(format!("{} routes for {m} vehicles", routes.len())));
    }
    let mut seen = vec![false; n];
    let mut distance = 0.0;
    for (v, route) in routes.iter().enumerate() {
        let mut load = 0u64;
        let mut at = inst.depot;
        for &c in route {
            if c >= n {
                return Err(BaselineError::Invalid(format!("route {v} visits customer {c} >= {n}")));
            }
            if seen[c] {
                return Err(BaselineError::Invalid(format!("customer {c} visited twice")));
            }
            seen[c] = true;
            load += u64::from(inst.customers[c].demand);
            distance += at.distance(inst.customers[c].at);
            at = inst.customers[c].at;
        }
        if load > u64::from(inst.vehicles[v]) {
            return Err(BaselineError::Invalid(format!(
                "vehicle {v} loaded {load} over capacity {}",
                inst.vehicles[v]
            )));
        }
        if depot_return && !route.is_empty() {
            distance += at.distance(inst.depot);
        }
    }
    if let Some(c) = seen.iter().position(|&s| !s) {
        return Err(BaselineError::Invalid(format!("customer {c} never served")));
    }
    if (distance - sol.total_cost).abs() > 1e-9 {
        return Err(BaselineError::Invalid(format!(
            "recomputed distance {distance} != reported {}",
            sol.total_cost
        )));
    }
    let used = routes.iter().filter(|r| !r.is_empty()).count();
    if used != sol.workers_used {
        return Err(BaselineError::Invalid(format!(
            "recounted {used} vehicles != reported {}",
            sol.workers_used
        )));
    }
    Ok(())
}
