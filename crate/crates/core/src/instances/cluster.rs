//! Eligibility clustering.
//!
//! Tasks with identical eligibility sets form a cluster that can be
//! solved independently of the rest: only workers of the eligible
//! classes can serve them, and those workers start fresh within the
//! cluster. Costs and worker counts add up across clusters.

use super::{ApInstance, InstanceError};

/// One independently solvable sub-problem plus the index maps back into
/// the original instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub instance: ApInstance,
    /// Original task index of each sub-instance task, ascending.
    pub task_indices: Vec<usize>,
    /// Original worker index of each sub-instance worker, ascending.
    pub worker_indices: Vec<usize>,
}

/// Partition an instance by identical task eligibility sets. Clusters
/// are ordered by first task appearance; a worker class serving several
/// distinct eligibility sets appears in several clusters.
pub fn eligibility_clusters(inst: &ApInstance) -> Result<Vec<Cluster>, InstanceError> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (t, task) in inst.tasks.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|(rep, _)| inst.tasks[*rep].eligibility == task.eligibility)
        {
            Some((_, members)) => members.push(t),
            None => groups.push((t, vec![t])),
        }
    }
    groups
        .into_iter()
        .map(|(rep, task_indices)| {
            let eligibility = &inst.tasks[rep].eligibility;
            let worker_indices: Vec<usize> = inst
                .workers
                .iter()
                .enumerate()
                .filter(|(_, w)| eligibility.contains(&w.class))
                .map(|(j, _)| j)
                .collect();
            if worker_indices.is_empty() {
                return Err(InstanceError::Infeasible(format!(
                    "task {rep} eligibility {eligibility:?} matches no worker"
                )));
            }
            let instance = ApInstance {
                tasks: task_indices.iter().map(|&t| inst.tasks[t].clone()).collect(),
                workers: worker_indices.iter().map(|&j| inst.workers[j]).collect(),
                cost: task_indices
                    .iter()
                    .map(|&t| worker_indices.iter().map(|&j| inst.cost[t][j]).collect())
                    .collect(),
                seed: inst.seed,
            };
            Ok(Cluster { instance, task_indices, worker_indices })
        })
        .collect()
}
