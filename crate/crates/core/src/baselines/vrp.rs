//! Routing solvers: optimal route partition via dynamic programming
//! over customer subsets with Held-Karp tours (exact), and nearest
//! feasible customer per active vehicle (greedy). Both charge the
//! return leg to the depot, matching the default reward convention.

use super::{BaselineError, Solution, SolutionDetail};
use crate::instances::VrpInstance;

/// Beyond this many customers the subset tables are no longer cheap
/// and [`exact_vrp`] refuses to run.
pub const EXACT_VRP_MAX_CUSTOMERS: usize = 9;

/// Serve customers with one vehicle at a time: repeatedly drive to the
/// nearest unserved customer whose demand still fits (ties to the
/// lowest index), returning to the depot and opening the next vehicle
/// when nothing fits.
pub fn greedy_vrp(inst: &VrpInstance) -> Result<Solution, BaselineError> {
    let n = inst.customers.len();
    let m = inst.vehicles.len();
    let mut routes: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut served = vec![false; n];
    let mut left = n;
    let mut distance = 0.0;
    let mut v = 0usize;
    let mut position = inst.depot;
    let mut free = u64::from(inst.vehicles.first().copied().unwrap_or(0));

    while left > 0 {
        if v >= m {
            return Err(BaselineError::Infeasible(format!(
                "{left} customers remain after all {m} vehicles are exhausted"
            )));
        }
        let mut pick: Option<(f64, usize)> = None;
        for c in 0..n {
            if served[c] || u64::from(inst.customers[c].demand) > free {
                continue;
            }
            let leg = position.distance(inst.customers[c].at);
            if pick.map_or(true, |(best, _)| leg < best) {
                pick = Some((leg, c));
            }
        }
        match pick {
            Some((leg, c)) => {
                distance += leg;
                position = inst.customers[c].at;
                free -= u64::from(inst.customers[c].demand);
                served[c] = true;
                routes[v].push(c);
                left -= 1;
            }
            None => {
                if !routes[v].is_empty() {
                    distance += position.distance(inst.depot);
                }
                v += 1;
                position = inst.depot;
                free = if v < m { u64::from(inst.vehicles[v]) } else { 0 };
            }
        }
    }
    if v < m && !routes[v].is_empty() {
        distance += position.distance(inst.depot);
    }

    let workers_used = routes.iter().filter(|r| !r.is_empty()).count();
    Ok(Solution {
        detail: SolutionDetail::Routes { routes },
        total_cost: distance,
        workers_used,
        optimal: false,
    })
}

/// Find a minimum-distance set of depot round trips covering every
/// customer, using at most the available vehicles. Requires uniform
/// vehicle capacities (routes are interchangeable across vehicles).
///
/// Every customer subset gets its optimal tour by Held-Karp, then a
/// partition DP picks the cheapest feasible decomposition, preferring
/// fewer vehicles at equal distance.
pub fn exact_vrp(inst: &VrpInstance) -> Result<Solution, BaselineError> {
    let n = inst.customers.len();
    let m = inst.vehicles.len();
    if n > EXACT_VRP_MAX_CUSTOMERS {
        return Err(BaselineError::TooLarge(format!(
            "{n} customers exceeds the exact routing limit of {EXACT_VRP_MAX_CUSTOMERS}"
        )));
    }
    let Some(&cap) = inst.vehicles.first() else {
        return Err(BaselineError::Infeasible("no vehicles".into()));
    };
    if inst.vehicles.iter().any(|&c| c != cap) {
        return Err(BaselineError::Unsupported(
            "exact routing requires uniform vehicle capacities".into(),
        ));
    }
    if n == 0 {
        return Ok(Solution {
            detail: SolutionDetail::Routes { routes: vec![Vec::new(); m] },
            total_cost: 0.0,
            workers_used: 0,
            optimal: true,
        });
    }

    let full = (1usize << n) - 1;
    let depot_leg: Vec<f64> =
        inst.customers.iter().map(|c| inst.depot.distance(c.at)).collect();
    let leg: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| inst.customers[i].at.distance(inst.customers[j].at)).collect())
        .collect();

    let mut demand = vec![0u64; full + 1];
    for s in 1..=full {
        let low = s.trailing_zeros() as usize;
        demand[s] = demand[s & (s - 1)] + u64::from(inst.customers[low].demand);
    }

    // Held-Karp: path[s][j] = shortest depot -> (s minus j) -> j walk.
    let mut path = vec![vec![f64::INFINITY; n]; full + 1];
    let mut parent = vec![vec![usize::MAX; n]; full + 1];
    for j in 0..n {
        path[1 << j][j] = depot_leg[j];
    }
    for s in 1..=full {
        for j in 0..n {
            if s & (1 << j) == 0 || path[s][j].is_infinite() {
                continue;
            }
            for k in 0..n {
                if s & (1 << k) != 0 {
                    continue;
                }
                let cand = path[s][j] + leg[j][k];
                let t = s | (1 << k);
                if cand < path[t][k] {
                    path[t][k] = cand;
                    parent[t][k] = j;
                }
            }
        }
    }
    // tour[s] closes the walk back at the depot.
    let mut tour = vec![f64::INFINITY; full + 1];
    let mut tour_end = vec![usize::MAX; full + 1];
    for s in 1..=full {
        for j in 0..n {
            if s & (1 << j) == 0 {
                continue;
            }
            let cand = path[s][j] + depot_leg[j];
            if cand < tour[s] {
                tour[s] = cand;
                tour_end[s] = j;
            }
        }
    }

    // Partition DP over (served set, routes used). Anchoring each part
    // on the set's lowest customer enumerates every partition once.
    let parts_cap = m.min(n);
    let mut best = vec![vec![f64::INFINITY; parts_cap + 1]; full + 1];
    let mut choice = vec![vec![0usize; parts_cap + 1]; full + 1];
    best[0][0] = 0.0;
    for s in 1..=full {
        let low = 1usize << s.trailing_zeros();
        for p in 1..=parts_cap {
            let mut sub = s;
            while sub > 0 {
                if sub & low != 0 && demand[sub] <= u64::from(cap) {
                    let rest = best[s ^ sub][p - 1];
                    if rest.is_finite() {
                        let cand = tour[sub] + rest;
                        if cand < best[s][p] {
                            best[s][p] = cand;
                            choice[s][p] = sub;
                        }
                    }
                }
                sub = (sub - 1) & s;
            }
        }
    }

    let mut total = f64::INFINITY;
    let mut parts = 0usize;
    for p in 1..=parts_cap {
        if best[full][p] < total {
            total = best[full][p];
            parts = p;
        }
    }
    if !total.is_finite() {
        return Err(BaselineError::Infeasible(
            "some customer group exceeds vehicle capacity in every split".into(),
        ));
    }

    let mut routes: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut s = full;
    let mut p = parts;
    let mut vehicle = 0usize;
    while p > 0 {
        let sub = choice[s][p];
        let mut order = Vec::with_capacity(sub.count_ones() as usize);
        let mut cur = sub;
        let mut j = tour_end[sub];
        while cur != 0 {
            order.push(j);
            let prev = parent[cur][j];
            cur ^= 1 << j;
            j = prev;
        }
        order.reverse();
        routes[vehicle] = order;
        vehicle += 1;
        s ^= sub;
        p -= 1;
    }

    Ok(Solution {
        detail: SolutionDetail::Routes { routes },
        total_cost: total,
        workers_used: parts,
        optimal: true,
    })
}
