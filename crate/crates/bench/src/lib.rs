//! Shared fixtures for the criterion benchmarks: deterministic
//! instances, policies and batches sized like the real workloads.

use assignrl_core::envs::{make_env, Environment, RewardConfig};
use assignrl_core::instances::{generate_instance, GenConfig, Instance, InstanceKind};
use assignrl_core::nn::{NetShape, PolicyParams};

/// Assignment instance `n` tasks wide, generator defaults, fixed seed.
pub fn ap_instance(n: usize, seed: u64) -> Instance {
    generate_instance(InstanceKind::Ap, n, seed, &GenConfig::default())
        .expect("assignment generator accepts benchmark sizes")
}

/// Environment plus a randomly initialized full-size policy for it.
pub fn env_and_policy(inst: &Instance) -> (Box<dyn Environment>, PolicyParams) {
    let env = make_env(inst, RewardConfig::default_for(inst)).expect("instance builds an env");
    let shape = NetShape::for_instance(inst.task_count(), inst.worker_count());
    let params = PolicyParams::init(shape, 17).expect("default shape is valid");
    (env, params)
}
