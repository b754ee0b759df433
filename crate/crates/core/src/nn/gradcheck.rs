//! Central-finite-difference verification of the analytic gradients.
//!
//! Parameters whose ±h probes land on different sides of a ReLU, clip
//! or min branch are skipped (the loss is not differentiable across
//! the kink, so the comparison would be meaningless) and counted.

use super::forward::{
    actor_loss_and_grad, actor_loss_only, critic_loss_and_grad, critic_loss_only, ActorBatch,
    CriticBatch,
};
use super::{BatchObs, NetShape, NnError, PolicyParams};
use crate::envs::{ActionMask, Observation};
use crate::seeds::{self, tags};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct FdReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl FdReport {
    fn new(tolerance: f64) -> FdReport {
        FdReport { checked: 0, skipped: 0, max_rel_err: 0.0, tolerance }
    }

    pub fn pass(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    fn absorb(&mut self, other: &FdReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
    }
}

fn compare_stack(
    params: &[f64],
    grads: &[f64],
    h: f64,
    report: &mut FdReport,
    eval: impl Fn(&[f64]) -> Result<(f64, u64), NnError>,
) -> Result<(), NnError> {
    let mut work = params.to_vec();
    for i in 0..params.len() {
        work[i] = params[i] + h;
        let (loss_plus, sig_plus) = eval(&work)?;
        work[i] = params[i] - h;
        let (loss_minus, sig_minus) = eval(&work)?;
        work[i] = params[i];
        if sig_plus != sig_minus {
            report.skipped += 1;
            continue;
        }
        let fd = (loss_plus - loss_minus) / (2.0 * h);
        let g = grads[i];
        let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-3);
        report.checked += 1;
        report.max_rel_err = report.max_rel_err.max(rel);
    }
    Ok(())
}

/// Check both stacks of one policy against central differences on the
/// given batches.
pub fn finite_difference_check(
    shape: &NetShape,
    params: &PolicyParams,
    actor_batch: &ActorBatch,
    critic_batch: &CriticBatch,
    h: f64,
    tolerance: f64,
) -> Result<FdReport, NnError> {
    let actor_update = actor_loss_and_grad(shape, &params.actor, actor_batch)?;
    let critic_update = critic_loss_and_grad(shape, &params.critic, critic_batch)?;
    let mut report = FdReport::new(tolerance);
    compare_stack(&params.actor, &actor_update.grads, h, &mut report, |p| {
        actor_loss_only(shape, p, actor_batch)
    })?;
    compare_stack(&params.critic, &critic_update.grads, h, &mut report, |p| {
        critic_loss_only(shape, p, critic_batch)
    })?;
    Ok(report)
}

/// Owned random (net, batch) material for one suite pair.
pub(crate) struct RandomPair {
    pub shape: NetShape,
    pub params: PolicyParams,
    pub obs: BatchObs,
    pub masks: Vec<ActionMask>,
    pub actions: Vec<usize>,
    pub log_prob_old: Vec<f64>,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
    pub entropy_coef: f64,
}

impl RandomPair {
    pub fn actor_batch(&self) -> ActorBatch<'_> {
        ActorBatch {
            obs: &self.obs,
            masks: &self.masks,
            actions: &self.actions,
            log_prob_old: &self.log_prob_old,
            advantages: &self.advantages,
            epsilon: 0.2,
            entropy_coef: self.entropy_coef,
        }
    }

    pub fn critic_batch(&self) -> CriticBatch<'_> {
        CriticBatch { obs: &self.obs, targets: &self.targets }
    }
}

pub(crate) fn random_pair(seed: u64, index: u64) -> RandomPair {
    let mut rng = seeds::rng(seeds::mix_indexed(seed, tags::GRADCHECK, index));
    let shape = NetShape {
        seq_len: rng.random_range(4..=8),
        scalar_inputs: 2,
        conv_filters: rng.random_range(2..=5),
        kernel: if rng.random_range(0..2) == 0 { 1 } else { 3 },
        hidden: rng.random_range(4..=8),
        actions: rng.random_range(2..=5),
    };
    let params = PolicyParams::init(shape, rng.random()).expect("random shape is valid");
    let b = rng.random_range(2..=5);
    let rows: Vec<Observation> = (0..b)
        .map(|_| Observation {
            seq: (0..shape.seq_len).map(|_| rng.random_range(0.0..1.2)).collect(),
            scalars: (0..shape.scalar_inputs).map(|_| rng.random_range(0.0..1.0)).collect(),
        })
        .collect();
    let refs: Vec<&Observation> = rows.iter().collect();
    let obs = BatchObs::from_rows(&shape, &refs).expect("rows built from shape");
    let mut masks = Vec::with_capacity(b);
    let mut actions = Vec::with_capacity(b);
    let mut log_prob_old = Vec::with_capacity(b);
    for _ in 0..b {
        let mut allowed: Vec<bool> = (0..shape.actions).map(|_| rng.random_range(0..10) < 7).collect();
        if !allowed.iter().any(|&a| a) {
            let j = rng.random_range(0..shape.actions);
            allowed[j] = true;
        }
        let open: Vec<usize> =
            allowed.iter().enumerate().filter(|(_, &a)| a).map(|(j, _)| j).collect();
        actions.push(open[rng.random_range(0..open.len())]);
        let uniform = -(open.len() as f64).ln();
        log_prob_old.push(uniform + rng.random_range(-0.3..0.3));
        masks.push(ActionMask { allowed });
    }
    let advantages = (0..b).map(|_| rng.random_range(-2.0..2.0)).collect();
    let targets = (0..b).map(|_| rng.random_range(-5.0..5.0)).collect();
    let entropy_coef = if index % 2 == 0 { 0.0 } else { 0.01 };
    RandomPair { shape, params, obs, masks, actions, log_prob_old, advantages, targets, entropy_coef }
}

/// Run [`finite_difference_check`] over `pairs` random small nets and
/// batches. Every net stays well under 5k parameters.
pub fn run_gradcheck_suite(pairs: usize, seed: u64, tolerance: f64) -> Result<FdReport, NnError> {
    let mut total = FdReport::new(tolerance);
    for index in 0..pairs {
        let pair = random_pair(seed, index as u64);
        let report = finite_difference_check(
            &pair.shape,
            &pair.params,
            &pair.actor_batch(),
            &pair.critic_batch(),
            1e-4,
            tolerance,
        )?;
        total.absorb(&report);
    }
    Ok(total)
}
