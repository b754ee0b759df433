//! Masked actor-critic PPO for capacity-constrained assignment problems.
//!
//! The crate has three layers:
//!
//! * problem data: [`instances`] defines the assignment, bin-packing and
//!   vehicle-routing instance models, seeded generators and the canonical
//!   JSON file format; [`envs`] turns an instance into a sequential
//!   decision process with feasibility masking.
//! * learning: [`nn`] is a small dense/conv1d network engine with exact
//!   reverse-mode gradients, masked softmax and the PPO losses; [`ppo`]
//!   adds episode collection, the one-step advantage estimate, the
//!   experience buffer and the update loop.
//! * evaluation: [`baselines`] holds exact branch-and-bound and greedy
//!   reference solvers, and [`bench`] is the experiment harness (size
//!   sweeps, perturbation re-inference, report emission).

pub mod baselines;
pub mod bench;
pub mod checkpoint;
pub mod envs;
pub mod instances;
pub mod nn;
pub mod ppo;
pub mod seeds;
pub mod selftest;

pub use baselines::{BaselineError, Solution, SolutionDetail};
pub use bench::{BenchError, BenchReport, BenchRow, Method, PerturbSpec, ReportFormat};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use envs::{ActionMask, EnvState, Environment, RewardConfig, StepOutcome};
pub use nn::{NetShape, PolicyParams};
pub use ppo::{Experience, RolloutBuffer, TrainConfig};
pub use instances::{
    ApInstance, BinInstance, GenConfig, Instance, InstanceKind, VrpInstance,
};
