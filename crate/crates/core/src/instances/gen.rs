//! Seeded instance generators and the sampling distributions they
//! induce.
//!
//! A distribution fixes the parts of an instance the policy never
//! observes directly (cost matrix, item values, customer coordinates)
//! and resamples the time-unit parts (efforts, weights, demands) per
//! sample index. `generate_*` is sample 0 of the corresponding
//! distribution, so generator output and training distribution agree by
//! construction.

use super::{
    ApInstance, BinInstance, BinItem, CostValue, Customer, Instance, InstanceError, InstanceKind,
    Point, RngSeed, TaskSpec, TimeUnits, VrpInstance, WorkerClass, WorkerSpec,
};
use crate::seeds::{self, tags};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Knobs for the random generators. Defaults follow the experimental
/// recipe: every worker gets 15 time units, efforts are capped at 15,
/// and each instance gets two more workers than tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub worker_surplus: usize,
    pub capacity_default: TimeUnits,
    pub effort_cap: TimeUnits,
    pub cost_range: [CostValue; 2],
    pub coord_range: [f64; 2],
    pub class_count: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            worker_surplus: 2,
            capacity_default: 15,
            effort_cap: 15,
            cost_range: [10, 200],
            coord_range: [0.0, 100.0],
            class_count: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.effort_cap < 1 {
            return Err(InstanceError::Config("effort_cap must be at least 1".into()));
        }
        if self.effort_cap > self.capacity_default {
            return Err(InstanceError::Config(format!(
                "effort_cap {} exceeds capacity_default {}",
                self.effort_cap, self.capacity_default
            )));
        }
        if self.cost_range[0] > self.cost_range[1] {
            return Err(InstanceError::Config(format!(
                "cost_range lo {} > hi {}",
                self.cost_range[0], self.cost_range[1]
            )));
        }
        if !(self.coord_range[0].is_finite() && self.coord_range[1].is_finite()) {
            return Err(InstanceError::Config("coord_range must be finite".into()));
        }
        if self.coord_range[0] > self.coord_range[1] {
            return Err(InstanceError::Config(format!(
                "coord_range lo {} > hi {}",
                self.coord_range[0], self.coord_range[1]
            )));
        }
        if self.class_count < 1 {
            return Err(InstanceError::Config("class_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Round-robin class for the i-th demand-side entity. Workers use the
/// same rule over n+surplus indices, so every task class always has at
/// least as many workers as tasks and a full assignment exists.
fn class_of(index: usize, class_count: u32) -> WorkerClass {
    (index as u32) % class_count
}

fn draw_time_units(rng: &mut impl Rng, n: usize, cap: TimeUnits) -> Vec<TimeUnits> {
    (0..n).map(|_| rng.random_range(1..=cap)).collect()
}

/// Snap a coordinate to 6 fractional digits so the file format
/// roundtrips it exactly.
fn quantize(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// A family of instances sharing everything except the time-unit data.
pub trait Distribution: Send + Sync {
    fn kind(&self) -> InstanceKind;
    fn sample(&self, index: u64) -> Instance;
}

/// Assignment instances with a fixed cost matrix and resampled efforts.
#[derive(Debug, Clone)]
pub struct ApDistribution {
    base: ApInstance,
    cfg: GenConfig,
    seed: RngSeed,
}

impl ApDistribution {
    pub fn new(n: usize, seed: RngSeed, cfg: GenConfig) -> Result<Self, InstanceError> {
        cfg.validate()?;
        let m = n + cfg.worker_surplus;
        let mut effort_rng = seeds::rng(seeds::mix_indexed(seed, tags::EFFORTS, 0));
        let efforts = draw_time_units(&mut effort_rng, n, cfg.effort_cap);
        let mut cost_rng = seeds::rng(seeds::mix(seed, tags::COSTS));
        let cost = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| cost_rng.random_range(cfg.cost_range[0]..=cfg.cost_range[1]))
                    .collect()
            })
            .collect();
        let tasks = efforts
            .into_iter()
            .enumerate()
            .map(|(i, effort)| TaskSpec {
                effort,
                eligibility: BTreeSet::from([class_of(i, cfg.class_count)]),
            })
            .collect();
        let workers = (0..m)
            .map(|j| WorkerSpec {
                capacity: cfg.capacity_default,
                class: class_of(j, cfg.class_count),
            })
            .collect();
        let base = ApInstance { tasks, workers, cost, seed };
        Ok(ApDistribution { base, cfg, seed })
    }

    pub fn sample_ap(&self, index: u64) -> ApInstance {
        let mut inst = self.base.clone();
        let mut rng = seeds::rng(seeds::mix_indexed(self.seed, tags::EFFORTS, index));
        for task in &mut inst.tasks {
            task.effort = rng.random_range(1..=self.cfg.effort_cap);
        }
        inst
    }
}

impl Distribution for ApDistribution {
    fn kind(&self) -> InstanceKind {
        InstanceKind::Ap
    }

    fn sample(&self, index: u64) -> Instance {
        Instance::Ap(self.sample_ap(index))
    }
}

/// Bin-packing instances with fixed item values and resampled weights.
#[derive(Debug, Clone)]
pub struct BinDistribution {
    base: BinInstance,
    cfg: GenConfig,
    seed: RngSeed,
}

impl BinDistribution {
    pub fn new(n: usize, seed: RngSeed, cfg: GenConfig) -> Result<Self, InstanceError> {
        cfg.validate()?;
        let m = n + cfg.worker_surplus;
        let mut weight_rng = seeds::rng(seeds::mix_indexed(seed, tags::WEIGHTS, 0));
        let weights = draw_time_units(&mut weight_rng, n, cfg.effort_cap);
        let mut value_rng = seeds::rng(seeds::mix(seed, tags::VALUES));
        let items = weights
            .into_iter()
            .map(|weight| BinItem {
                weight,
                value: value_rng.random_range(cfg.cost_range[0]..=cfg.cost_range[1]),
            })
            .collect();
        let bins = vec![cfg.capacity_default; m];
        let base = BinInstance { items, bins, seed };
        Ok(BinDistribution { base, cfg, seed })
    }

    pub fn sample_bin(&self, index: u64) -> BinInstance {
        let mut inst = self.base.clone();
        let mut rng = seeds::rng(seeds::mix_indexed(self.seed, tags::WEIGHTS, index));
        for item in &mut inst.items {
            item.weight = rng.random_range(1..=self.cfg.effort_cap);
        }
        inst
    }
}

impl Distribution for BinDistribution {
    fn kind(&self) -> InstanceKind {
        InstanceKind::Bin
    }

    fn sample(&self, index: u64) -> Instance {
        Instance::Bin(self.sample_bin(index))
    }
}

/// Routing instances with fixed coordinates and resampled demands.
#[derive(Debug, Clone)]
pub struct VrpDistribution {
    base: VrpInstance,
    cfg: GenConfig,
    seed: RngSeed,
}

impl VrpDistribution {
    pub fn new(n: usize, seed: RngSeed, cfg: GenConfig) -> Result<Self, InstanceError> {
        cfg.validate()?;
        let m = n + cfg.worker_surplus;
        let mut demand_rng = seeds::rng(seeds::mix_indexed(seed, tags::DEMANDS, 0));
        let demands = draw_time_units(&mut demand_rng, n, cfg.effort_cap);
        let mut coord_rng = seeds::rng(seeds::mix(seed, tags::COORDS));
        let [lo, hi] = cfg.coord_range;
        let mut draw_point = move || {
            let x = quantize(coord_rng.random_range(lo..=hi));
            let y = quantize(coord_rng.random_range(lo..=hi));
            Point { x, y }
        };
        let customers = demands
            .into_iter()
            .map(|demand| Customer { at: draw_point(), demand })
            .collect();
        let mid = quantize((lo + hi) / 2.0);
        let base = VrpInstance {
            depot: Point { x: mid, y: mid },
            customers,
            vehicles: vec![cfg.capacity_default; m],
            seed,
        };
        Ok(VrpDistribution { base, cfg, seed })
    }

    pub fn sample_vrp(&self, index: u64) -> VrpInstance {
        let mut inst = self.base.clone();
        let mut rng = seeds::rng(seeds::mix_indexed(self.seed, tags::DEMANDS, index));
        for customer in &mut inst.customers {
            customer.demand = rng.random_range(1..=self.cfg.effort_cap);
        }
        inst
    }
}

impl Distribution for VrpDistribution {
    fn kind(&self) -> InstanceKind {
        InstanceKind::Vrp
    }

    fn sample(&self, index: u64) -> Instance {
        Instance::Vrp(self.sample_vrp(index))
    }
}

pub fn generate_ap_instance(
    n: usize,
    seed: RngSeed,
    cfg: &GenConfig,
) -> Result<ApInstance, InstanceError> {
    Ok(ApDistribution::new(n, seed, cfg.clone())?.sample_ap(0))
}

pub fn generate_bin_instance(
    n: usize,
    seed: RngSeed,
    cfg: &GenConfig,
) -> Result<BinInstance, InstanceError> {
    Ok(BinDistribution::new(n, seed, cfg.clone())?.sample_bin(0))
}

pub fn generate_vrp_instance(
    n: usize,
    seed: RngSeed,
    cfg: &GenConfig,
) -> Result<VrpInstance, InstanceError> {
    Ok(VrpDistribution::new(n, seed, cfg.clone())?.sample_vrp(0))
}

/// Kind-dispatched distribution constructor.
pub fn make_distribution(
    kind: InstanceKind,
    n: usize,
    seed: RngSeed,
    cfg: &GenConfig,
) -> Result<Box<dyn Distribution>, InstanceError> {
    Ok(match kind {
        InstanceKind::Ap => Box::new(ApDistribution::new(n, seed, cfg.clone())?),
        InstanceKind::Bin => Box::new(BinDistribution::new(n, seed, cfg.clone())?),
        InstanceKind::Vrp => Box::new(VrpDistribution::new(n, seed, cfg.clone())?),
    })
}

/// Kind-dispatched single-instance generator (sample index 0).
pub fn generate_instance(
    kind: InstanceKind,
    n: usize,
    seed: RngSeed,
    cfg: &GenConfig,
) -> Result<Instance, InstanceError> {
    Ok(make_distribution(kind, n, seed, cfg)?.sample(0))
}
