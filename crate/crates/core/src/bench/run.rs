//! Benchmark execution: greedy-decode a pretrained policy into a
//! validated [`Solution`], sweep perturbed instances without
//! retraining, and tabulate methods side by side.

use super::{BenchError, BenchReport, BenchRow, Method, PerturbSpec};
use crate::baselines::{
    exact_solution, greedy_solution, validate_solution, BaselineError, Solution, SolutionDetail,
};
use crate::envs::{make_env, RewardConfig};
use crate::instances::{generate_instance, GenConfig, Instance, InstanceError, InstanceKind};
use crate::nn::{NetShape, PolicyParams};
use crate::ppo::{collect_episode, DecodeMode, EpisodeRecord};
use crate::seeds::{self, tags};
use std::collections::BTreeMap;
use std::time::Instant;

/// Apply a [`PerturbSpec`] to an instance's time units. The result is
/// revalidated; task order, costs, values and coordinates are
/// untouched.
pub fn perturb_instance(inst: &Instance, spec: &PerturbSpec) -> Result<Instance, InstanceError> {
    let n = inst.task_count();
    if spec.k > n {
        return Err(InstanceError::Config(format!(
            "cannot perturb {} of {n} tasks",
            spec.k
        )));
    }
    let chosen: Vec<usize> = match spec.selection_seed {
        None => (0..spec.k).collect(),
        Some(s) => {
            let mut rng = seeds::rng(seeds::mix(s, tags::PERTURB));
            let mut picked = rand::seq::index::sample(&mut rng, n, spec.k).into_vec();
            picked.sort_unstable();
            picked
        }
    };
    let bump = |units: u32, cap: u32| -> u32 {
        (i64::from(units) + spec.delta).clamp(1, i64::from(cap)) as u32
    };
    let mut out = inst.clone();
    match &mut out {
        Instance::Ap(i) => {
            let cap = i.max_capacity();
            for &t in &chosen {
                i.tasks[t].effort = bump(i.tasks[t].effort, cap);
            }
        }
        Instance::Bin(i) => {
            let cap = i.max_capacity();
            for &t in &chosen {
                i.items[t].weight = bump(i.items[t].weight, cap);
            }
        }
        Instance::Vrp(i) => {
            let cap = i.max_capacity();
            for &t in &chosen {
                i.customers[t].demand = bump(i.customers[t].demand, cap);
            }
        }
    }
    out.validate()?;
    Ok(out)
}

/// Turn a finished episode's decode trace into a [`Solution`],
/// recomputing the objective from the instance and cross-checking it
/// against the environment's accumulator.
pub fn solution_from_episode(
    inst: &Instance,
    record: &EpisodeRecord,
    rcfg: RewardConfig,
) -> Result<Solution, BenchError> {
    if !record.final_state.done {
        return Err(BenchError::Config("episode did not run to completion".into()));
    }
    let pairs = record.preassigned.iter().chain(record.decisions.iter());
    let (detail, total_cost) = match inst {
        Instance::Ap(i) => {
            let mut worker_of_task = vec![usize::MAX; i.tasks.len()];
            for &(t, j) in pairs {
                worker_of_task[t] = j;
            }
            if worker_of_task.contains(&usize::MAX) {
                return Err(BenchError::Internal("episode left a task unassigned".into()));
            }
            let cost: u64 = worker_of_task
                .iter()
                .enumerate()
                .map(|(t, &j)| u64::from(i.cost[t][j]))
                .sum();
            (SolutionDetail::Assignment { worker_of_task }, cost as f64)
        }
        Instance::Bin(i) => {
            let mut bin_of_item = vec![None; i.items.len()];
            for &(t, j) in pairs {
                bin_of_item[t] = Some(j);
            }
            for (t, slot) in bin_of_item.iter().enumerate() {
                let skipped = record.final_state.skipped.get(t).copied().unwrap_or(false);
                if slot.is_none() != skipped {
                    return Err(BenchError::Internal(format!(
                        "item {t}: placement and skip flag disagree"
                    )));
                }
            }
            let value: u64 = bin_of_item
                .iter()
                .enumerate()
                .filter(|(_, s)| s.is_some())
                .map(|(t, _)| u64::from(i.items[t].value))
                .sum();
            (SolutionDetail::Packing { bin_of_item }, value as f64)
        }
        Instance::Vrp(i) => {
            let mut routes: Vec<Vec<usize>> = vec![Vec::new(); i.vehicles.len()];
            for &(c, v) in pairs {
                routes[v].push(c);
            }
            let mut distance = 0.0;
            for route in routes.iter().filter(|r| !r.is_empty()) {
                let mut at = i.depot;
                for &c in route {
                    distance += at.distance(i.customers[c].at);
                    at = i.customers[c].at;
                }
                if rcfg.depot_return {
                    distance += at.distance(i.depot);
                }
            }
            (SolutionDetail::Routes { routes }, distance)
        }
    };
    if (total_cost - record.final_state.cumulative_cost).abs() > 1e-9 {
        return Err(BenchError::Internal(format!(
            "decode recomputation {total_cost} disagrees with the environment accumulator {}",
            record.final_state.cumulative_cost
        )));
    }
    let sol = Solution {
        detail,
        total_cost,
        workers_used: record.final_state.workers_used(),
        optimal: false,
    };
    validate_solution(inst, &sol, rcfg.depot_return).map_err(|e| {
        BenchError::Internal(format!("decoded solution failed validation: {e}"))
    })?;
    Ok(sol)
}

/// Greedy-decode a pretrained policy on one instance. No parameter
/// updates happen; the returned seconds cover environment setup and
/// decoding only.
pub fn evaluate_pretrained(
    params: &PolicyParams,
    inst: &Instance,
    rcfg: RewardConfig,
) -> Result<(Solution, f64), BenchError> {
    let expected = NetShape::for_instance(inst.task_count(), inst.worker_count());
    if params.shape.seq_len != expected.seq_len || params.shape.actions != expected.actions {
        return Err(BenchError::Config(format!(
            "policy expects {} sequence inputs and {} actions; instance needs {} and {}",
            params.shape.seq_len, params.shape.actions, expected.seq_len, expected.actions
        )));
    }
    let started = Instant::now();
    let env = make_env(inst, rcfg)?;
    let mut rng = seeds::rng(seeds::mix(0, tags::EVAL));
    let record = collect_episode(env.as_ref(), params, 1.0, 1.0, DecodeMode::Greedy, &mut rng)?;
    let elapsed = started.elapsed().as_secs_f64();
    let sol = solution_from_episode(inst, &record, rcfg)?;
    Ok((sol, elapsed))
}

/// One perturbation level of a sweep: the same pretrained policy
/// decoded on the perturbed instance, next to recomputed baselines.
#[derive(Debug, Clone)]
pub struct PerturbOutcome {
    pub k: usize,
    pub instance: Instance,
    pub rl: Solution,
    pub rl_seconds: f64,
    /// Absent when the exact solver declined (size or fleet shape).
    pub exact: Option<(Solution, f64)>,
    pub greedy: Option<(Solution, f64)>,
}

/// Re-infer on perturbed variants of `base` without retraining. For
/// each `k` the spec's first-`k` (or seeded) selection is applied and
/// the policy, exact solver, and greedy baseline all solve the same
/// perturbed instance.
pub fn perturbation_sweep(
    params: &PolicyParams,
    base: &Instance,
    rcfg: RewardConfig,
    ks: &[usize],
    delta: i64,
    selection_seed: Option<u64>,
    with_exact: bool,
    with_greedy: bool,
) -> Result<Vec<PerturbOutcome>, BenchError> {
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let spec = PerturbSpec { k, delta, selection_seed };
        let inst = perturb_instance(base, &spec)?;
        let (rl, rl_seconds) = evaluate_pretrained(params, &inst, rcfg)?;
        let exact = if with_exact {
            let started = Instant::now();
            match exact_solution(&inst, rcfg.worker_penalty) {
                Ok(s) => Some((s, started.elapsed().as_secs_f64())),
                Err(BaselineError::TooLarge(_)) | Err(BaselineError::Unsupported(_)) => None,
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };
        let greedy = if with_greedy {
            let started = Instant::now();
            let s = greedy_solution(&inst, rcfg.worker_penalty)?;
            Some((s, started.elapsed().as_secs_f64()))
        } else {
            None
        };
        for (name, sol) in [("exact", &exact), ("greedy", &greedy)] {
            if let Some((s, _)) = sol {
                validate_solution(&inst, s, rcfg.depot_return).map_err(|e| {
                    BenchError::Internal(format!("{name} solution failed validation: {e}"))
                })?;
            }
        }
        out.push(PerturbOutcome { k, instance: inst, rl, rl_seconds, exact, greedy });
    }
    Ok(out)
}

/// Tabulate a perturbation sweep. Row ids carry the perturbation
/// level (`perturb-k3`); gaps are filled in wherever the exact
/// solution is present.
pub fn sweep_report(
    kind: InstanceKind,
    outcomes: &[PerturbOutcome],
    worker_penalty: f64,
    policy_hashes: BTreeMap<String, String>,
) -> BenchReport {
    let mut rows = Vec::new();
    for o in outcomes {
        let id = format!("perturb-k{}", o.k);
        let size = o.instance.task_count();
        let exact_obj =
            o.exact.as_ref().map(|(s, _)| penalized_objective(kind, s, worker_penalty));
        let mut push = |method: Method, sol: &Solution, secs: f64| {
            let mut row = solved_row(&id, kind, size, method, sol, secs);
            if let Some(reference) = exact_obj {
                row.gap_vs_exact =
                    gap(kind, penalized_objective(kind, sol, worker_penalty), reference);
            }
            rows.push(row);
        };
        push(Method::Rl, &o.rl, o.rl_seconds);
        if let Some((s, secs)) = &o.exact {
            push(Method::Exact, s, *secs);
        }
        if let Some((s, secs)) = &o.greedy {
            push(Method::Greedy, s, *secs);
        }
    }
    BenchReport { rows, policy_hashes }
}

/// What to benchmark: one family, a grid of sizes and generator
/// seeds, and the methods to run on each instance.
#[derive(Debug, Clone)]
pub struct BenchTask<'a> {
    pub kind: InstanceKind,
    pub sizes: &'a [usize],
    /// Generator seeds 0..seeds per size.
    pub seeds: u64,
    pub methods: &'a [Method],
    pub gen: GenConfig,
    /// Fixed worker penalty; `None` derives the per-instance default.
    pub worker_penalty: Option<f64>,
    pub depot_return: bool,
}

/// Objective used for gap computation; see the module docs.
fn penalized_objective(kind: InstanceKind, sol: &Solution, penalty: f64) -> f64 {
    match kind {
        InstanceKind::Ap | InstanceKind::Vrp => sol.objective(penalty),
        InstanceKind::Bin => sol.total_cost,
    }
}

fn gap(kind: InstanceKind, method_obj: f64, exact_obj: f64) -> Option<f64> {
    if exact_obj == 0.0 {
        return None;
    }
    let g = match kind {
        InstanceKind::Ap | InstanceKind::Vrp => (method_obj - exact_obj) / exact_obj,
        InstanceKind::Bin => (exact_obj - method_obj) / exact_obj,
    };
    Some(g)
}

/// Run every requested method over the size x seed grid. Each row's
/// solution revalidates before it is reported; the exact solver is
/// skipped (with the reason in `note`) where it declines to run. RL
/// rows require a policy for the instance size in `policies`.
pub fn run_benchmark(
    task: &BenchTask,
    policies: &BTreeMap<usize, PolicyParams>,
    policy_hashes: BTreeMap<String, String>,
) -> Result<BenchReport, BenchError> {
    let mut rows = Vec::new();
    for &size in task.sizes {
        for seed in 0..task.seeds {
            let inst = generate_instance(task.kind, size, seed, &task.gen)?;
            let rcfg = RewardConfig {
                worker_penalty: task
                    .worker_penalty
                    .unwrap_or_else(|| RewardConfig::default_for(&inst).worker_penalty),
                depot_return: task.depot_return,
            };
            let id = format!("{}-n{size}-s{seed}", task.kind);

            let mut exact_obj = None;
            let mut instance_rows = Vec::new();
            for &method in task.methods {
                let row = match method {
                    Method::Exact => {
                        let started = Instant::now();
                        match exact_solution(&inst, rcfg.worker_penalty) {
                            Ok(sol) => {
                                let secs = started.elapsed().as_secs_f64();
                                validate_solution(&inst, &sol, task.depot_return).map_err(
                                    |e| {
                                        BenchError::Internal(format!(
                                            "exact solution failed validation on {id}: {e}"
                                        ))
                                    },
                                )?;
                                exact_obj = Some(penalized_objective(
                                    task.kind,
                                    &sol,
                                    rcfg.worker_penalty,
                                ));
                                solved_row(&id, task.kind, size, method, &sol, secs)
                            }
                            Err(
                                e @ (BaselineError::TooLarge(_) | BaselineError::Unsupported(_)),
                            ) => skipped_row(&id, task.kind, size, method, format!("skipped: {e}")),
                            Err(e) => return Err(e.into()),
                        }
                    }
                    Method::Greedy => {
                        let started = Instant::now();
                        let sol = greedy_solution(&inst, rcfg.worker_penalty)?;
                        let secs = started.elapsed().as_secs_f64();
                        validate_solution(&inst, &sol, task.depot_return).map_err(|e| {
                            BenchError::Internal(format!(
                                "greedy solution failed validation on {id}: {e}"
                            ))
                        })?;
                        solved_row(&id, task.kind, size, method, &sol, secs)
                    }
                    Method::Rl => match policies.get(&size) {
                        None => skipped_row(
                            &id,
                            task.kind,
                            size,
                            method,
                            format!("skipped: no policy supplied for size {size}"),
                        ),
                        Some(params) => {
                            let (sol, secs) = evaluate_pretrained(params, &inst, rcfg)?;
                            solved_row(&id, task.kind, size, method, &sol, secs)
                        }
                    },
                };
                instance_rows.push(row);
            }
            if let Some(reference) = exact_obj {
                for row in &mut instance_rows {
                    if let Some(cost) = row.cost {
                        let obj = match task.kind {
                            InstanceKind::Bin => cost,
                            _ => cost + rcfg.worker_penalty * row.workers_used as f64,
                        };
                        row.gap_vs_exact = gap(task.kind, obj, reference);
                    }
                }
            }
            rows.extend(instance_rows);
        }
    }
    Ok(BenchReport { rows, policy_hashes })
}

fn solved_row(
    id: &str,
    kind: InstanceKind,
    size: usize,
    method: Method,
    sol: &Solution,
    seconds: f64,
) -> BenchRow {
    BenchRow {
        instance: id.to_string(),
        kind,
        size,
        method,
        cost: Some(sol.total_cost),
        workers_used: sol.workers_used,
        solve_time_seconds: seconds,
        feasible: true,
        gap_vs_exact: None,
        note: String::new(),
    }
}

fn skipped_row(id: &str, kind: InstanceKind, size: usize, method: Method, note: String) -> BenchRow {
    BenchRow {
        instance: id.to_string(),
        kind,
        size,
        method,
        cost: None,
        workers_used: 0,
        solve_time_seconds: 0.0,
        feasible: false,
        gap_vs_exact: None,
        note,
    }
}
