//! Instance file format: a UTF-8 JSON object with a `kind` tag.
//!
//! The on-disk structs are separate from the domain types so the format
//! can reject unknown fields with line/column errors (serde's internal
//! tagging disables `deny_unknown_fields`, so the tag is probed first
//! and the kind-specific strict struct parsed second).

use super::{
    ApInstance, BinInstance, BinItem, Customer, Instance, InstanceError, InstanceKind, Point,
    RngSeed, TaskSpec, TimeUnits, VrpInstance, WorkerClass, WorkerSpec,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Deserialize)]
struct KindProbe {
    kind: InstanceKind,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApFile {
    kind: InstanceKind,
    seed: RngSeed,
    tasks: Vec<TaskFile>,
    workers: Vec<WorkerFile>,
    cost: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    effort: TimeUnits,
    eligibility: BTreeSet<WorkerClass>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkerFile {
    capacity: TimeUnits,
    class: WorkerClass,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinFile {
    kind: InstanceKind,
    seed: RngSeed,
    items: Vec<ItemFile>,
    bins: Vec<TimeUnits>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemFile {
    weight: TimeUnits,
    value: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VrpFile {
    kind: InstanceKind,
    seed: RngSeed,
    depot: (f64, f64),
    customers: Vec<CustomerFile>,
    vehicles: Vec<TimeUnits>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomerFile {
    at: (f64, f64),
    demand: TimeUnits,
}

/// Render an instance in the canonical file format.
pub fn serialize_instance(inst: &Instance) -> String {
    let text = match inst {
        Instance::Ap(i) => serde_json::to_string_pretty(&ApFile {
            kind: InstanceKind::Ap,
            seed: i.seed,
            tasks: i
                .tasks
                .iter()
                .map(|t| TaskFile { effort: t.effort, eligibility: t.eligibility.clone() })
                .collect(),
            workers: i
                .workers
                .iter()
                .map(|w| WorkerFile { capacity: w.capacity, class: w.class })
                .collect(),
            cost: i.cost.clone(),
        }),
        Instance::Bin(i) => serde_json::to_string_pretty(&BinFile {
            kind: InstanceKind::Bin,
            seed: i.seed,
            items: i
                .items
                .iter()
                .map(|it| ItemFile { weight: it.weight, value: it.value })
                .collect(),
            bins: i.bins.clone(),
        }),
        Instance::Vrp(i) => serde_json::to_string_pretty(&VrpFile {
            kind: InstanceKind::Vrp,
            seed: i.seed,
            depot: i.depot.into(),
            customers: i
                .customers
                .iter()
                .map(|c| CustomerFile { at: c.at.into(), demand: c.demand })
                .collect(),
            vehicles: i.vehicles.clone(),
        }),
    };
    text.expect("instance serialization cannot fail")
}

/// Parse the canonical file format. Unknown or missing fields are
/// rejected with the line and field named in the error.
pub fn parse_instance(text: &str) -> Result<Instance, InstanceError> {
    let probe: KindProbe =
        serde_json::from_str(text).map_err(|e| InstanceError::Parse(e.to_string()))?;
    let inst = match probe.kind {
        InstanceKind::Ap => {
            let f: ApFile =
                serde_json::from_str(text).map_err(|e| InstanceError::Parse(e.to_string()))?;
            Instance::Ap(ApInstance {
                tasks: f
                    .tasks
                    .into_iter()
                    .map(|t| TaskSpec { effort: t.effort, eligibility: t.eligibility })
                    .collect(),
                workers: f
                    .workers
                    .into_iter()
                    .map(|w| WorkerSpec { capacity: w.capacity, class: w.class })
                    .collect(),
                cost: f.cost,
                seed: f.seed,
            })
        }
        InstanceKind::Bin => {
            let f: BinFile =
                serde_json::from_str(text).map_err(|e| InstanceError::Parse(e.to_string()))?;
            Instance::Bin(BinInstance {
                items: f
                    .items
                    .into_iter()
                    .map(|it| BinItem { weight: it.weight, value: it.value })
                    .collect(),
                bins: f.bins,
                seed: f.seed,
            })
        }
        InstanceKind::Vrp => {
            let f: VrpFile =
                serde_json::from_str(text).map_err(|e| InstanceError::Parse(e.to_string()))?;
            Instance::Vrp(VrpInstance {
                depot: Point::from(f.depot),
                customers: f
                    .customers
                    .into_iter()
                    .map(|c| Customer { at: Point::from(c.at), demand: c.demand })
                    .collect(),
                vehicles: f.vehicles,
                seed: f.seed,
            })
        }
    };
    Ok(inst)
}
