//! Brute-force reference optima, independent of the branch-and-bound
//! solvers they certify: plain recursive enumeration for assignment
//! and packing, set-partition plus permutation search for routing.

use assignrl_core::instances::{ApInstance, BinInstance, VrpInstance};

/// Minimum assignment objective (cost plus `lambda` per used worker)
/// over every feasible task-to-worker map. `None` when no assignment
/// fits.
pub fn brute_force_ap(inst: &ApInstance, lambda: f64) -> Option<f64> {
    let n = inst.tasks.len();
    let mut capacity: Vec<u32> = inst.workers.iter().map(|w| w.capacity).collect();
    let mut used = vec![false; inst.workers.len()];
    let mut best: Option<f64> = None;

    fn recurse(
        inst: &ApInstance,
        lambda: f64,
        t: usize,
        n: usize,
        capacity: &mut [u32],
        used: &mut [bool],
        cost_so_far: f64,
        best: &mut Option<f64>,
    ) {
        if t == n {
            let workers = used.iter().filter(|&&u| u).count();
            let obj = cost_so_far + lambda * workers as f64;
            if best.map_or(true, |b| obj < b) {
                *best = Some(obj);
            }
            return;
        }
        let task = &inst.tasks[t];
        for j in 0..capacity.len() {
            if capacity[j] < task.effort || !task.eligibility.contains(&inst.workers[j].class) {
                continue;
            }
            let was_used = used[j];
            capacity[j] -= task.effort;
            used[j] = true;
            recurse(
                inst,
                lambda,
                t + 1,
                n,
                capacity,
                used,
                cost_so_far + f64::from(inst.cost[t][j]),
                best,
            );
            capacity[j] += task.effort;
            used[j] = was_used;
        }
    }

    recurse(inst, lambda, 0, n, &mut capacity, &mut used, 0.0, &mut best);
    best
}

/// Lexicographic packing optimum: maximum packed value, then minimum
/// bins used, over every placement (including skips).
pub fn brute_force_bin(inst: &BinInstance) -> (u64, usize) {
    let mut capacity = inst.bins.clone();
    let mut best = (0u64, 0usize);

    fn recurse(
        inst: &BinInstance,
        i: usize,
        capacity: &mut [u32],
        value: u64,
        best: &mut (u64, usize),
    ) {
        if i == inst.items.len() {
            let bins = capacity
                .iter()
                .zip(&inst.bins)
                .filter(|(now, orig)| now != orig)
                .count();
            if value > best.0 || (value == best.0 && bins < best.1) {
                *best = (value, bins);
            }
            return;
        }
        let item = &inst.items[i];
        for b in 0..capacity.len() {
            if capacity[b] >= item.weight {
                capacity[b] -= item.weight;
                recurse(inst, i + 1, capacity, value + u64::from(item.value), best);
                capacity[b] += item.weight;
            }
        }
        recurse(inst, i + 1, capacity, value, best);
    }

    // Seed with "skip everything" so empty packings compare correctly.
    best.1 = usize::MAX;
    recurse(inst, 0, &mut capacity, 0, &mut best);
    best
}

/// Minimum total route distance (depot departures and returns charged)
/// over every partition of the customers into at most `vehicles` loads
/// that fit the uniform capacity, each visited in its best order.
/// `None` when no partition fits.
pub fn brute_force_vrp(inst: &VrpInstance) -> Option<f64> {
    let n = inst.customers.len();
    let m = inst.vehicles.len();
    let cap = inst.vehicles[0];
    assert!(
        inst.vehicles.iter().all(|&c| c == cap),
        "oracle assumes the uniform fleet the generator produces"
    );

    fn best_route(inst: &VrpInstance, group: &[usize]) -> f64 {
        // Shortest open path over all permutations, closed at the depot.
        fn permute(
            inst: &VrpInstance,
            remaining: &mut Vec<usize>,
            last: Option<usize>,
            so_far: f64,
            best: &mut f64,
        ) {
            if so_far >= *best {
                return;
            }
            if remaining.is_empty() {
                let back = inst.customers[last.expect("group is non-empty")]
                    .at
                    .distance(inst.depot);
                *best = (*best).min(so_far + back);
                return;
            }
            for i in 0..remaining.len() {
                let c = remaining.remove(i);
                let from = match last {
                    None => inst.depot,
                    Some(p) => inst.customers[p].at,
                };
                let leg = from.distance(inst.customers[c].at);
                permute(inst, remaining, Some(c), so_far + leg, best);
                remaining.insert(i, c);
            }
        }
        let mut best = f64::INFINITY;
        permute(inst, &mut group.to_vec(), None, 0.0, &mut best);
        best
    }

    // Restricted-growth enumeration of set partitions.
    fn recurse(
        inst: &VrpInstance,
        c: usize,
        n: usize,
        m: usize,
        cap: u32,
        groups: &mut Vec<Vec<usize>>,
        loads: &mut Vec<u32>,
        best: &mut Option<f64>,
    ) {
        if c == n {
            let total: f64 = groups.iter().map(|g| best_route(inst, g)).sum();
            if best.map_or(true, |b| total < b) {
                *best = Some(total);
            }
            return;
        }
        let demand = inst.customers[c].demand;
        for g in 0..groups.len() {
            if loads[g] + demand > cap {
                continue;
            }
            loads[g] += demand;
            groups[g].push(c);
            recurse(inst, c + 1, n, m, cap, groups, loads, best);
            groups[g].pop();
            loads[g] -= demand;
        }
        if groups.len() < m && demand <= cap {
            groups.push(vec![c]);
            loads.push(demand);
            recurse(inst, c + 1, n, m, cap, groups, loads, best);
            groups.pop();
            loads.pop();
        }
    }

    let mut best = None;
    recurse(inst, 0, n, m, cap, &mut Vec::new(), &mut Vec::new(), &mut best);
    best
}
