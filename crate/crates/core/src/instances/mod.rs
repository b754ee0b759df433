//! Problem instance data models.
//!
//! Three instance kinds share one shape: a list of demand-side entities
//! (tasks / items / customers) with integer time units, a list of
//! supply-side entities (workers / bins / vehicles) with integer
//! capacities, and a per-kind objective payload (cost matrix, item
//! values, coordinates).

mod cluster;
mod format;
mod gen;

pub use cluster::{eligibility_clusters, Cluster};
pub use format::{parse_instance, serialize_instance};
pub use gen::{
    generate_ap_instance, generate_bin_instance, generate_instance, generate_vrp_instance,
    make_distribution, ApDistribution, BinDistribution, Distribution, GenConfig, VrpDistribution,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Integer duration a task consumes from a worker's capacity. Also used
/// for item weights, bin capacities, customer demands and vehicle loads.
pub type TimeUnits = u32;
/// Cost of one task-worker assignment.
pub type CostValue = u32;
/// Value of packing one item.
pub type ValueUnits = u32;
/// Worker class identifier referenced by task eligibility sets.
pub type WorkerClass = u32;
/// Seed recorded on generated instances.
pub type RngSeed = u64;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// One task: its remaining effort and the worker classes allowed to
/// service it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub effort: TimeUnits,
    pub eligibility: BTreeSet<WorkerClass>,
}

/// One worker: available time units and its class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerSpec {
    pub capacity: TimeUnits,
    pub class: WorkerClass,
}

/// Assignment problem instance: `cost[task][worker]` is the cost of the
/// pairing; workers can take several tasks until their capacity runs out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApInstance {
    pub tasks: Vec<TaskSpec>,
    pub workers: Vec<WorkerSpec>,
    pub cost: Vec<Vec<CostValue>>,
    pub seed: RngSeed,
}

/// One item to pack: weight consumed from a bin, value gained by packing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinItem {
    pub weight: TimeUnits,
    pub value: ValueUnits,
}

/// Bin packing instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinInstance {
    pub items: Vec<BinItem>,
    pub bins: Vec<TimeUnits>,
    pub seed: RngSeed,
}

/// A 2-D coordinate, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

impl From<Point> for (f64, f64) {
    fn from(p: Point) -> Self {
        (p.x, p.y)
    }
}

impl Point {
    pub fn distance(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// One customer: location and demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub at: Point,
    pub demand: TimeUnits,
}

/// Capacitated vehicle routing instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrpInstance {
    pub depot: Point,
    pub customers: Vec<Customer>,
    pub vehicles: Vec<TimeUnits>,
    pub seed: RngSeed,
}

/// Which of the three problem families an instance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Ap,
    Bin,
    Vrp,
}

impl InstanceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InstanceKind::Ap => "ap",
            InstanceKind::Bin => "bin",
            InstanceKind::Vrp => "vrp",
        }
    }
}

impl std::str::FromStr for InstanceKind {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ap" => Ok(InstanceKind::Ap),
            "bin" => Ok(InstanceKind::Bin),
            "vrp" => Ok(InstanceKind::Vrp),
            other => Err(InstanceError::Parse(format!("unknown instance kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An instance of any of the three kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Ap(ApInstance),
    Bin(BinInstance),
    Vrp(VrpInstance),
}

impl Instance {
    pub fn kind(&self) -> InstanceKind {
        match self {
            Instance::Ap(_) => InstanceKind::Ap,
            Instance::Bin(_) => InstanceKind::Bin,
            Instance::Vrp(_) => InstanceKind::Vrp,
        }
    }

    /// Number of demand-side entities (tasks / items / customers).
    pub fn task_count(&self) -> usize {
        match self {
            Instance::Ap(i) => i.tasks.len(),
            Instance::Bin(i) => i.items.len(),
            Instance::Vrp(i) => i.customers.len(),
        }
    }

    /// Number of supply-side entities (workers / bins / vehicles).
    pub fn worker_count(&self) -> usize {
        match self {
            Instance::Ap(i) => i.workers.len(),
            Instance::Bin(i) => i.bins.len(),
            Instance::Vrp(i) => i.vehicles.len(),
        }
    }

    pub fn seed(&self) -> RngSeed {
        match self {
            Instance::Ap(i) => i.seed,
            Instance::Bin(i) => i.seed,
            Instance::Vrp(i) => i.seed,
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        match self {
            Instance::Ap(i) => i.validate(),
            Instance::Bin(i) => i.validate(),
            Instance::Vrp(i) => i.validate(),
        }
    }
}

impl ApInstance {
    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn worker_count(&self) -> usize {
        self.workers.len()
    }

    /// Largest worker capacity; 0 for a worker-less instance.
    pub fn max_capacity(&self) -> TimeUnits {
        self.workers.iter().map(|w| w.capacity).max().unwrap_or(0)
    }

    /// Mean of the cost matrix, rounded to the nearest integer. Used as
    /// the default worker-activation penalty so that opening a worker is
    /// comparable in scale to one assignment.
    pub fn mean_cost(&self) -> f64 {
        let entries = self.tasks.len() * self.workers.len();
        if entries == 0 {
            return 0.0;
        }
        let sum: u64 = self.cost.iter().flatten().map(|&c| u64::from(c)).sum();
        (sum as f64 / entries as f64).round()
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let n = self.tasks.len();
        let m = self.workers.len();
        if self.cost.len() != n {
            return Err(InstanceError::Invalid(format!(
                "cost matrix has {} rows, expected {n}",
                self.cost.len()
            )));
        }
        for (t, row) in self.cost.iter().enumerate() {
            if row.len() != m {
                return Err(InstanceError::Invalid(format!(
                    "cost row {t} has {} entries, expected {m}",
                    row.len()
                )));
            }
        }
        let max_cap = self.max_capacity();
        let classes: BTreeSet<WorkerClass> = self.workers.iter().map(|w| w.class).collect();
        for (t, task) in self.tasks.iter().enumerate() {
            if task.effort < 1 || task.effort > max_cap {
                return Err(InstanceError::Invalid(format!(
                    "task {t} effort {} outside [1, {max_cap}]",
                    task.effort
                )));
            }
            if task.eligibility.is_empty() {
                return Err(InstanceError::Invalid(format!("task {t} has empty eligibility")));
            }
            if let Some(c) = task.eligibility.iter().find(|c| !classes.contains(c)) {
                return Err(InstanceError::Invalid(format!(
                    "task {t} eligibility references class {c} with no workers"
                )));
            }
        }
        Ok(())
    }
}

impl BinInstance {
    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn max_capacity(&self) -> TimeUnits {
        self.bins.iter().copied().max().unwrap_or(0)
    }

    /// Mean item value, rounded; default bin-activation penalty scale.
    pub fn mean_value(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        let sum: u64 = self.items.iter().map(|it| u64::from(it.value)).sum();
        (sum as f64 / self.items.len() as f64).round()
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        for (i, item) in self.items.iter().enumerate() {
            if item.weight < 1 {
                return Err(InstanceError::Invalid(format!("item {i} has zero weight")));
            }
        }
        Ok(())
    }
}

impl VrpInstance {
    pub fn customer_count(&self) -> usize {
        self.customers.len()
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn max_capacity(&self) -> TimeUnits {
        self.vehicles.iter().copied().max().unwrap_or(0)
    }

    /// Mean pairwise distance over depot and customers, rounded; default
    /// vehicle-activation penalty scale.
    pub fn mean_distance(&self) -> f64 {
        let mut points = vec![self.depot];
        points.extend(self.customers.iter().map(|c| c.at));
        let mut sum = 0.0;
        let mut count = 0u64;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                sum += points[i].distance(points[j]);
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            (sum / count as f64).round()
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        if !self.depot.x.is_finite() || !self.depot.y.is_finite() {
            return Err(InstanceError::Invalid("depot coordinate not finite".into()));
        }
        for (i, c) in self.customers.iter().enumerate() {
            if c.demand < 1 {
                return Err(InstanceError::Invalid(format!("customer {i} has zero demand")));
            }
            if !c.at.x.is_finite() || !c.at.y.is_finite() {
                return Err(InstanceError::Invalid(format!("customer {i} coordinate not finite")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_ap() -> ApInstance {
        ApInstance {
            tasks: vec![
                TaskSpec { effort: 5, eligibility: BTreeSet::from([0]) },
                TaskSpec { effort: 7, eligibility: BTreeSet::from([0]) },
            ],
            workers: vec![
                WorkerSpec { capacity: 15, class: 0 },
                WorkerSpec { capacity: 15, class: 0 },
            ],
            cost: vec![vec![40, 50], vec![60, 10]],
            seed: 0,
        }
    }

    #[test]
    fn valid_ap_passes() {
        tiny_ap().validate().unwrap();
    }

    #[test]
    fn cost_shape_mismatch_rejected() {
        let mut inst = tiny_ap();
        inst.cost.pop();
        assert!(matches!(inst.validate(), Err(InstanceError::Invalid(_))));
    }

    #[test]
    fn effort_above_capacity_rejected() {
        let mut inst = tiny_ap();
        inst.tasks[0].effort = 16;
        assert!(inst.validate().is_err());
    }

    #[test]
    fn unknown_eligibility_class_rejected() {
        let mut inst = tiny_ap();
        inst.tasks[1].eligibility = BTreeSet::from([3]);
        let err = inst.validate().unwrap_err();
        assert!(err.to_string().contains("class 3"));
    }

    #[test]
    fn point_distance_is_euclidean() {
        let a = Point { x: 0.0, y: 0.0 };
        let b = Point { x: 3.0, y: 4.0 };
        assert_eq!(a.distance(b), 5.0);
    }

    #[test]
    fn mean_cost_rounds() {
        let inst = tiny_ap();
        // (40 + 50 + 60 + 10) / 4 = 40
        assert_eq!(inst.mean_cost(), 40.0);
    }
}
