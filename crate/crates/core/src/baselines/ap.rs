//! Assignment solvers: depth-first branch-and-bound (exact) and a
//! cheapest-feasible-worker heuristic (greedy). Both minimize
//! `total cost + worker_penalty * workers activated`.

use super::{BaselineError, Solution, SolutionDetail};
use crate::instances::ApInstance;

/// Beyond this many tasks the branch-and-bound tree is no longer
/// reliably tractable and [`exact_ap`] refuses to run.
pub const EXACT_AP_MAX_TASKS: usize = 14;

/// Assign every task to the worker with the cheapest immediate
/// objective increase (`cost + penalty if the worker is fresh`),
/// processing tasks in index order. Ties go to the lowest worker
/// index.
pub fn greedy_ap(inst: &ApInstance, worker_penalty: f64) -> Result<Solution, BaselineError> {
    let n = inst.tasks.len();
    let m = inst.workers.len();
    let mut capacity: Vec<u32> = inst.workers.iter().map(|w| w.capacity).collect();
    let mut used = vec![false; m];
    let mut worker_of_task = vec![0usize; n];
    let mut cost = 0u64;

    for t in 0..n {
        let task = &inst.tasks[t];
        let mut best: Option<(f64, usize)> = None;
        for j in 0..m {
            if capacity[j] < task.effort || !task.eligibility.contains(&inst.workers[j].class) {
                continue;
            }
            let marginal = f64::from(inst.cost[t][j])
                + if used[j] { 0.0 } else { worker_penalty };
            if best.map_or(true, |(b, _)| marginal < b) {
                best = Some((marginal, j));
            }
        }
        let Some((_, j)) = best else {
            return Err(BaselineError::Infeasible(format!(
                "no worker can take task {t} (effort {})",
                task.effort
            )));
        };
        capacity[j] -= task.effort;
        used[j] = true;
        worker_of_task[t] = j;
        cost += u64::from(inst.cost[t][j]);
    }

    Ok(Solution {
        detail: SolutionDetail::Assignment { worker_of_task },
        total_cost: cost as f64,
        workers_used: used.iter().filter(|&&u| u).count(),
        optimal: false,
    })
}

/// Find a minimum-objective assignment by depth-first branch and
/// bound over tasks in index order. Children are explored cheapest
/// first; subtrees are pruned against an admissible bound combining
/// per-task minimum feasible costs with a capacity-based lower bound
/// on additional worker activations.
pub fn exact_ap(inst: &ApInstance, worker_penalty: f64) -> Result<Solution, BaselineError> {
    let n = inst.tasks.len();
    if n > EXACT_AP_MAX_TASKS {
        return Err(BaselineError::TooLarge(format!(
            "{n} tasks exceeds the exact assignment limit of {EXACT_AP_MAX_TASKS}"
        )));
    }
    let mut search = Search {
        inst,
        penalty: worker_penalty,
        capacity: inst.workers.iter().map(|w| w.capacity).collect(),
        used: vec![false; inst.workers.len()],
        assignment: vec![0; n],
        best_objective: f64::INFINITY,
        best: None,
    };
    // A greedy incumbent tightens pruning from the first node.
    if let Ok(sol) = greedy_ap(inst, worker_penalty) {
        search.best_objective = sol.objective(worker_penalty);
        if let SolutionDetail::Assignment { worker_of_task } = &sol.detail {
            search.best = Some(worker_of_task.clone());
        }
    }
    search.dfs(0, 0);

    let Some(worker_of_task) = search.best else {
        return Err(BaselineError::Infeasible("no feasible assignment exists".into()));
    };
    let cost: u64 = worker_of_task
        .iter()
        .enumerate()
        .map(|(t, &j)| u64::from(inst.cost[t][j]))
        .sum();
    let mut used = vec![false; inst.workers.len()];
    for &j in &worker_of_task {
        used[j] = true;
    }
    Ok(Solution {
        detail: SolutionDetail::Assignment { worker_of_task },
        total_cost: cost as f64,
        workers_used: used.iter().filter(|&&u| u).count(),
        optimal: true,
    })
}

struct Search<'a> {
    inst: &'a ApInstance,
    penalty: f64,
    capacity: Vec<u32>,
    used: Vec<bool>,
    assignment: Vec<usize>,
    best_objective: f64,
    best: Option<Vec<usize>>,
}

impl Search<'_> {
    fn dfs(&mut self, t: usize, accumulated: u64) {
        let n = self.inst.tasks.len();
        let objective =
            accumulated as f64 + self.penalty * self.used.iter().filter(|&&u| u).count() as f64;
        if t == n {
            if objective < self.best_objective {
                self.best_objective = objective;
                self.best = Some(self.assignment.clone());
            }
            return;
        }
        let Some(bound) = self.lower_bound(t, objective) else { return };
        if bound >= self.best_objective {
            return;
        }

        let task = &self.inst.tasks[t];
        let mut children: Vec<(f64, usize)> = (0..self.inst.workers.len())
            .filter(|&j| {
                self.capacity[j] >= task.effort
                    && task.eligibility.contains(&self.inst.workers[j].class)
            })
            .map(|j| {
                let marginal = f64::from(self.inst.cost[t][j])
                    + if self.used[j] { 0.0 } else { self.penalty };
                (marginal, j)
            })
            .collect();
        children.sort_by(|a, b| a.partial_cmp(b).expect("finite marginals"));

        for (_, j) in children {
            let was_used = self.used[j];
            self.capacity[j] -= task.effort;
            self.used[j] = true;
            self.assignment[t] = j;
            self.dfs(t + 1, accumulated + u64::from(self.inst.cost[t][j]));
            self.capacity[j] += task.effort;
            self.used[j] = was_used;
        }
    }

    /// Admissible lower bound for completing tasks `t..`, or `None`
    /// when completion is provably impossible. Capacities only shrink
    /// down the tree, so a task no current worker can hold stays
    /// unservable in every descendant.
    fn lower_bound(&self, t: usize, objective_so_far: f64) -> Option<f64> {
        let mut bound = objective_so_far;
        let mut remaining_effort = 0u64;
        for (task, row) in self.inst.tasks[t..].iter().zip(&self.inst.cost[t..]) {
            remaining_effort += u64::from(task.effort);
            let cheapest = (0..self.inst.workers.len())
                .filter(|&j| {
                    self.capacity[j] >= task.effort
                        && task.eligibility.contains(&self.inst.workers[j].class)
                })
                .map(|j| row[j])
                .min()?;
            bound += f64::from(cheapest);
        }
        if self.penalty > 0.0 {
            bound += self.penalty * f64::from(self.min_extra_workers(remaining_effort)?);
        }
        Some(bound)
    }

    /// Fewest additional activations any completion needs: free
    /// capacity on active workers absorbs what it can, then fresh
    /// workers are counted in decreasing capacity order until the
    /// remaining effort fits. Eligibility is ignored, which only
    /// relaxes the bound.
    fn min_extra_workers(&self, remaining_effort: u64) -> Option<u32> {
        let active_free: u64 = (0..self.capacity.len())
            .filter(|&j| self.used[j])
            .map(|j| u64::from(self.capacity[j]))
            .sum();
        if remaining_effort <= active_free {
            return Some(0);
        }
        let mut fresh: Vec<u64> = (0..self.capacity.len())
            .filter(|&j| !self.used[j])
            .map(|j| u64::from(self.capacity[j]))
            .collect();
        fresh.sort_unstable_by(|a, b| b.cmp(a));
        let mut shortfall = remaining_effort - active_free;
        for (count, cap) in fresh.iter().enumerate() {
            shortfall = shortfall.saturating_sub(*cap);
            if shortfall == 0 {
                return Some(count as u32 + 1);
            }
        }
        None
    }
}
