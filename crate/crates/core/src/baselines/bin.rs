//! Packing solvers: branch-and-bound maximizing packed value and
//! then minimizing bins opened (exact), and best-fit decreasing by
//! value density (greedy). Items may be left out.

use super::{BaselineError, Solution, SolutionDetail};
use crate::instances::BinInstance;

/// Beyond this many items the branch-and-bound tree is no longer
/// reliably tractable and [`exact_bin`] refuses to run.
pub const EXACT_BIN_MAX_ITEMS: usize = 14;

/// Pack items in decreasing value-per-weight order, each into the
/// feasible bin with the least capacity left after placement (ties to
/// the lowest bin index). Unplaceable items are skipped.
pub fn greedy_bin(inst: &BinInstance) -> Result<Solution, BaselineError> {
    let n = inst.items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let da = f64::from(inst.items[a].value) / f64::from(inst.items[a].weight);
        let db = f64::from(inst.items[b].value) / f64::from(inst.items[b].weight);
        db.partial_cmp(&da).expect("finite densities").then(a.cmp(&b))
    });

    let mut capacity = inst.bins.clone();
    let mut bin_of_item: Vec<Option<usize>> = vec![None; n];
    let mut value = 0u64;
    for t in order {
        let w = inst.items[t].weight;
        let best = (0..capacity.len())
            .filter(|&j| capacity[j] >= w)
            .min_by_key(|&j| (capacity[j] - w, j));
        if let Some(j) = best {
            capacity[j] -= w;
            bin_of_item[t] = Some(j);
            value += u64::from(inst.items[t].value);
        }
    }

    let workers_used = count_bins(&bin_of_item, inst.bins.len());
    Ok(Solution {
        detail: SolutionDetail::Packing { bin_of_item },
        total_cost: value as f64,
        workers_used,
        optimal: false,
    })
}

/// Find a packing that maximizes total packed value, breaking ties by
/// fewest bins opened. Depth-first branch and bound over items in
/// index order; among untouched bins only the lowest index of each
/// distinct capacity is branched, since equal fresh bins are
/// interchangeable.
pub fn exact_bin(inst: &BinInstance) -> Result<Solution, BaselineError> {
    let n = inst.items.len();
    if n > EXACT_BIN_MAX_ITEMS {
        return Err(BaselineError::TooLarge(format!(
            "{n} items exceeds the exact packing limit of {EXACT_BIN_MAX_ITEMS}"
        )));
    }
    let mut search = BinSearch {
        inst,
        capacity: inst.bins.clone(),
        placement: vec![None; n],
        suffix_value: suffix_values(inst),
        best_value: 0,
        best_bins: usize::MAX,
        best: None,
    };
    if let Ok(greedy) = greedy_bin(inst) {
        if let SolutionDetail::Packing { bin_of_item } = &greedy.detail {
            search.best_value = greedy.total_cost as u64;
            search.best_bins = greedy.workers_used;
            search.best = Some(bin_of_item.clone());
        }
    }
    search.dfs(0, 0);

    let bin_of_item = search.best.expect("empty packing is always feasible");
    let workers_used = count_bins(&bin_of_item, inst.bins.len());
    Ok(Solution {
        detail: SolutionDetail::Packing { bin_of_item },
        total_cost: search.best_value as f64,
        workers_used,
        optimal: true,
    })
}

fn count_bins(bin_of_item: &[Option<usize>], m: usize) -> usize {
    let mut used = vec![false; m];
    for slot in bin_of_item.iter().flatten() {
        used[*slot] = true;
    }
    used.iter().filter(|&&u| u).count()
}

/// `suffix_value[t]` = total value of items `t..`, the most any
/// completion from item `t` can still add.
fn suffix_values(inst: &BinInstance) -> Vec<u64> {
    let mut suffix = vec![0u64; inst.items.len() + 1];
    for t in (0..inst.items.len()).rev() {
        suffix[t] = suffix[t + 1] + u64::from(inst.items[t].value);
    }
    suffix
}

struct BinSearch<'a> {
    inst: &'a BinInstance,
    capacity: Vec<u32>,
    placement: Vec<Option<usize>>,
    suffix_value: Vec<u64>,
    best_value: u64,
    best_bins: usize,
    best: Option<Vec<Option<usize>>>,
}

impl BinSearch<'_> {
    fn bins_open(&self) -> usize {
        self.capacity
            .iter()
            .zip(&self.inst.bins)
            .filter(|(now, init)| now != init)
            .count()
    }

    fn dfs(&mut self, t: usize, value: u64) {
        if t == self.inst.items.len() {
            let bins = self.bins_open();
            if value > self.best_value || (value == self.best_value && bins < self.best_bins) {
                self.best_value = value;
                self.best_bins = bins;
                self.best = Some(self.placement.clone());
            }
            return;
        }
        // Bins already open can only stay open, so the current count
        // lower-bounds every completion's count.
        let value_bound = value + self.suffix_value[t];
        let bins_now = self.bins_open();
        if value_bound < self.best_value
            || (value_bound == self.best_value && bins_now >= self.best_bins)
        {
            return;
        }

        let w = self.inst.items[t].weight;
        let mut seen_fresh_capacity: Vec<u32> = Vec::new();
        let candidates: Vec<usize> = (0..self.capacity.len())
            .filter(|&j| {
                if self.capacity[j] < w {
                    return false;
                }
                if self.capacity[j] == self.inst.bins[j] {
                    if seen_fresh_capacity.contains(&self.capacity[j]) {
                        return false;
                    }
                    seen_fresh_capacity.push(self.capacity[j]);
                }
                true
            })
            .collect();
        for j in candidates {
            self.capacity[j] -= w;
            self.placement[t] = Some(j);
            self.dfs(t + 1, value + u64::from(self.inst.items[t].value));
            self.placement[t] = None;
            self.capacity[j] += w;
        }
        // Skipping the item is always allowed; packed branches come
        // first so good incumbents appear early.
        self.dfs(t + 1, value);
    }
}
