//! Dense/conv1d network engine with exact reverse-mode gradients.
//!
//! Actor and critic share one trunk shape: the effort/capacity sequence
//! runs through a same-padded 1-D convolution and a dense layer, the
//! two scalars (clock, last completed task) through two dense layers,
//! and the concatenation feeds the head (worker logits under a masked
//! softmax for the actor, one linear unit for the critic). Everything
//! is 64-bit and deterministic; batch work is chunked so parallel
//! schedules cannot change results.

mod adam;
mod forward;
mod gradcheck;
mod ops;

pub use adam::Adam;
pub use forward::{
    actor_loss_and_grad, actor_loss_only, actor_probs, critic_loss_and_grad, critic_loss_only,
    critic_value, ActorBatch, ActorForward, ActorUpdate, CriticBatch, CriticUpdate,
};
pub use gradcheck::{finite_difference_check, run_gradcheck_suite, FdReport};
pub use ops::{masked_softmax, mse_loss, ppo_clip_loss};

use crate::envs::Observation;
use crate::seeds::{self, tags};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dead end: every action is masked")]
    AllMasked,
}

/// Architecture hyperparameters. One shape serves both stacks; the
/// critic reuses it with a single head output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    /// Sequence input length, task count + worker count.
    pub seq_len: usize,
    pub scalar_inputs: usize,
    pub conv_filters: usize,
    /// Convolution kernel width; odd, so same-padding is symmetric.
    pub kernel: usize,
    pub hidden: usize,
    /// Actor head width, the worker count.
    pub actions: usize,
}

impl NetShape {
    /// The experiment architecture: 128 conv filters (kernel 3) and
    /// 128-unit dense layers.
    pub fn for_instance(task_count: usize, worker_count: usize) -> NetShape {
        NetShape {
            seq_len: task_count + worker_count,
            scalar_inputs: crate::envs::SCALAR_INPUTS,
            conv_filters: 128,
            kernel: 3,
            hidden: 128,
            actions: worker_count,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.kernel % 2 == 0 || self.kernel == 0 {
            return Err(NnError::Shape(format!("kernel must be odd, got {}", self.kernel)));
        }
        if self.seq_len == 0 || self.hidden == 0 || self.conv_filters == 0 || self.actions == 0 {
            return Err(NnError::Shape(format!("degenerate shape {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn layout(&self, head_outputs: usize) -> Layout {
        let mut at = 0;
        let mut range = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        Layout {
            conv_w: range(self.conv_filters * self.kernel),
            conv_b: range(self.conv_filters),
            seq_w: range(self.seq_len * self.conv_filters * self.hidden),
            seq_b: range(self.hidden),
            sc1_w: range(self.scalar_inputs * self.hidden),
            sc1_b: range(self.hidden),
            sc2_w: range(self.hidden * self.hidden),
            sc2_b: range(self.hidden),
            head_w: range(2 * self.hidden * head_outputs),
            head_b: range(head_outputs),
            total: at,
        }
    }

    pub fn actor_param_count(&self) -> usize {
        self.layout(self.actions).total
    }

    pub fn critic_param_count(&self) -> usize {
        self.layout(1).total
    }
}

/// Flat parameter offsets for one stack. Matrix ranges are row-major
/// with input on the row axis, so `w[i, o]` multiplies input i into
/// output o.
pub(crate) struct Layout {
    pub conv_w: Range<usize>, // [filters, kernel]
    pub conv_b: Range<usize>,
    pub seq_w: Range<usize>, // [seq_len * filters, hidden]
    pub seq_b: Range<usize>,
    pub sc1_w: Range<usize>, // [scalar_inputs, hidden]
    pub sc1_b: Range<usize>,
    pub sc2_w: Range<usize>, // [hidden, hidden]
    pub sc2_b: Range<usize>,
    pub head_w: Range<usize>, // [2 * hidden, outputs]
    pub head_b: Range<usize>,
    pub total: usize,
}

/// Actor and critic parameters as flat little-endian-serializable
/// vectors in declared layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub shape: NetShape,
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
}

impl PolicyParams {
    /// He-style uniform init (±√(6/fan_in)) from the master seed's init
    /// stream; biases zero.
    pub fn init(shape: NetShape, seed: u64) -> Result<PolicyParams, NnError> {
        shape.validate()?;
        let actor = init_stack(&shape, shape.actions, seeds::mix_indexed(seed, tags::INIT, 0));
        let critic = init_stack(&shape, 1, seeds::mix_indexed(seed, tags::INIT, 1));
        Ok(PolicyParams { shape, actor, critic })
    }
}

fn init_stack(shape: &NetShape, head_outputs: usize, seed: u64) -> Vec<f64> {
    let layout = shape.layout(head_outputs);
    let mut params = vec![0.0; layout.total];
    let mut rng = seeds::rng(seed);
    let mut fill = |range: Range<usize>, fan_in: usize| {
        let limit = (6.0 / fan_in as f64).sqrt();
        for p in &mut params[range] {
            *p = rng.random_range(-limit..limit);
        }
    };
    fill(layout.conv_w, shape.kernel);
    fill(layout.seq_w, shape.seq_len * shape.conv_filters);
    fill(layout.sc1_w, shape.scalar_inputs);
    fill(layout.sc2_w, shape.hidden);
    fill(layout.head_w, 2 * shape.hidden);
    params
}

/// A batch of observations in matrix form, rows aligned with whatever
/// per-row data (masks, actions, targets) the caller holds.
#[derive(Debug, Clone)]
pub struct BatchObs {
    pub seq: Array2<f64>,
    pub scalars: Array2<f64>,
}

impl BatchObs {
    pub fn from_rows(shape: &NetShape, rows: &[&Observation]) -> Result<BatchObs, NnError> {
        let b = rows.len();
        let mut seq = Array2::zeros((b, shape.seq_len));
        let mut scalars = Array2::zeros((b, shape.scalar_inputs));
        for (i, obs) in rows.iter().enumerate() {
            if obs.seq.len() != shape.seq_len || obs.scalars.len() != shape.scalar_inputs {
                return Err(NnError::Shape(format!(
                    "observation row {i} has lengths ({}, {}), net expects ({}, {})",
                    obs.seq.len(),
                    obs.scalars.len(),
                    shape.seq_len,
                    shape.scalar_inputs
                )));
            }
            for (j, &v) in obs.seq.iter().enumerate() {
                seq[(i, j)] = v;
            }
            for (j, &v) in obs.scalars.iter().enumerate() {
                scalars[(i, j)] = v;
            }
        }
        Ok(BatchObs { seq, scalars })
    }

    pub fn single(shape: &NetShape, obs: &Observation) -> Result<BatchObs, NnError> {
        BatchObs::from_rows(shape, &[obs])
    }

    pub fn len(&self) -> usize {
        self.seq.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetShape {
        NetShape {
            seq_len: 6,
            scalar_inputs: 2,
            conv_filters: 4,
            kernel: 3,
            hidden: 8,
            actions: 3,
        }
    }

    #[test]
    fn layout_partitions_the_whole_vector() {
        let shape = tiny();
        let l = shape.layout(shape.actions);
        assert_eq!(l.conv_w.len(), 12);
        assert_eq!(l.seq_w.len(), 6 * 4 * 8);
        assert_eq!(l.head_w.len(), 16 * 3);
        assert_eq!(l.head_b.end, l.total);
        assert_eq!(shape.actor_param_count(), l.total);
        assert!(shape.critic_param_count() < shape.actor_param_count());
    }

    #[test]
    fn experiment_shape_matches_the_architecture() {
        let shape = NetShape::for_instance(10, 12);
        assert_eq!(shape.seq_len, 22);
        assert_eq!(shape.conv_filters, 128);
        assert_eq!(shape.kernel, 3);
        assert_eq!(shape.hidden, 128);
        assert_eq!(shape.actions, 12);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = PolicyParams::init(tiny(), 7).unwrap();
        let b = PolicyParams::init(tiny(), 7).unwrap();
        let c = PolicyParams::init(tiny(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.actor, c.actor);
        assert_ne!(a.actor, a.critic[..a.actor.len().min(a.critic.len())].to_vec());
        let limit = (6.0f64 / 3.0).sqrt();
        let l = tiny().layout(3);
        assert!(a.actor[l.conv_w].iter().all(|&w| w.abs() < limit));
        assert!(a.actor[l.conv_b].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn even_kernel_rejected() {
        let shape = NetShape { kernel: 2, ..tiny() };
        assert!(shape.validate().is_err());
    }
}
