//! Batched forward/backward passes for the actor and critic stacks.
//!
//! Batches are processed in fixed 64-row chunks; each chunk runs
//! sequentially and chunk results are reduced in index order, so the
//! gradients are identical under any parallel schedule.

use super::ops::{masked_log_prob, masked_softmax};
use super::{BatchObs, Layout, NetShape, NnError};
use crate::envs::{ActionMask, Observation};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use std::ops::Range;

const CHUNK: usize = 64;

fn weights(params: &[f64], range: Range<usize>, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &params[range]).expect("layout consistent with shape")
}

fn bias(params: &[f64], range: Range<usize>) -> ArrayView1<'_, f64> {
    ArrayView1::from(&params[range])
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

/// Gradient through ReLU: zero wherever the pre-activation was ≤ 0.
fn relu_back(d: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = d.clone();
    out.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    out
}

fn store_matrix(grads: &mut [f64], range: Range<usize>, m: &Array2<f64>) {
    for (dst, src) in grads[range].iter_mut().zip(m.iter()) {
        *dst = *src;
    }
}

fn store_vector(grads: &mut [f64], range: Range<usize>, v: &Array1<f64>) {
    for (dst, src) in grads[range].iter_mut().zip(v.iter()) {
        *dst = *src;
    }
}

/// Reshape that tolerates the column-major results `dot` produces for
/// transposed operands (copying only then).
fn reshape(a: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    if a.is_standard_layout() {
        a.into_shape_with_order(shape).expect("element count matches")
    } else {
        let flat: Vec<f64> = a.iter().copied().collect();
        Array2::from_shape_vec(shape, flat).expect("element count matches")
    }
}

/// Activations kept for the backward pass of one chunk.
struct TrunkCache {
    im2col: Array2<f64>,   // [B·L, K]
    conv_pre: Array2<f64>, // [B·L, F]
    flat: Array2<f64>,     // [B, L·F], post-ReLU conv output
    seq_pre: Array2<f64>,  // [B, H]
    sc1_pre: Array2<f64>,
    sc1_act: Array2<f64>,
    sc2_pre: Array2<f64>,
    concat: Array2<f64>, // [B, 2H]
}

fn trunk_forward(
    shape: &NetShape,
    layout: &Layout,
    params: &[f64],
    seq: ArrayView2<f64>,
    scalars: ArrayView2<f64>,
) -> TrunkCache {
    let b = seq.nrows();
    let (l, k, f, h) = (shape.seq_len, shape.kernel, shape.conv_filters, shape.hidden);
    let half = (k / 2) as isize;

    // Same-padded convolution as one matrix product over the unrolled
    // windows.
    let mut im2col = Array2::zeros((b * l, k));
    for r in 0..b {
        for p in 0..l {
            for kk in 0..k {
                let src = p as isize + kk as isize - half;
                if (0..l as isize).contains(&src) {
                    im2col[(r * l + p, kk)] = seq[(r, src as usize)];
                }
            }
        }
    }
    let mut conv_pre = im2col.dot(&weights(params, layout.conv_w.clone(), f, k).t());
    conv_pre += &bias(params, layout.conv_b.clone());
    let flat = reshape(relu(&conv_pre), (b, l * f));

    let mut seq_pre = flat.dot(&weights(params, layout.seq_w.clone(), l * f, h));
    seq_pre += &bias(params, layout.seq_b.clone());

    let mut sc1_pre = scalars.dot(&weights(params, layout.sc1_w.clone(), shape.scalar_inputs, h));
    sc1_pre += &bias(params, layout.sc1_b.clone());
    let sc1_act = relu(&sc1_pre);
    let mut sc2_pre = sc1_act.dot(&weights(params, layout.sc2_w.clone(), h, h));
    sc2_pre += &bias(params, layout.sc2_b.clone());

    let mut concat = Array2::zeros((b, 2 * h));
    concat.slice_mut(s![.., ..h]).assign(&relu(&seq_pre));
    concat.slice_mut(s![.., h..]).assign(&relu(&sc2_pre));

    TrunkCache { im2col, conv_pre, flat, seq_pre, sc1_pre, sc1_act, sc2_pre, concat }
}

fn head_forward(
    layout: &Layout,
    params: &[f64],
    concat: &Array2<f64>,
    outputs: usize,
    hidden: usize,
) -> Array2<f64> {
    let mut logits = concat.dot(&weights(params, layout.head_w.clone(), 2 * hidden, outputs));
    logits += &bias(params, layout.head_b.clone());
    logits
}

/// Backpropagate `d_logits` (∂loss/∂head output, summed convention)
/// through head and trunk, writing parameter gradients into `grads`.
fn trunk_backward(
    shape: &NetShape,
    layout: &Layout,
    params: &[f64],
    cache: &TrunkCache,
    scalars: ArrayView2<f64>,
    d_logits: &Array2<f64>,
    grads: &mut [f64],
) {
    let b = d_logits.nrows();
    let (l, f, h) = (shape.seq_len, shape.conv_filters, shape.hidden);
    let outputs = d_logits.ncols();

    store_matrix(grads, layout.head_w.clone(), &cache.concat.t().dot(d_logits));
    store_vector(grads, layout.head_b.clone(), &d_logits.sum_axis(Axis(0)));
    let d_concat = d_logits.dot(&weights(params, layout.head_w.clone(), 2 * h, outputs).t());

    let d_sc2_pre = relu_back(&d_concat.slice(s![.., h..]).to_owned(), &cache.sc2_pre);
    store_matrix(grads, layout.sc2_w.clone(), &cache.sc1_act.t().dot(&d_sc2_pre));
    store_vector(grads, layout.sc2_b.clone(), &d_sc2_pre.sum_axis(Axis(0)));
    let d_sc1_act = d_sc2_pre.dot(&weights(params, layout.sc2_w.clone(), h, h).t());
    let d_sc1_pre = relu_back(&d_sc1_act, &cache.sc1_pre);
    store_matrix(grads, layout.sc1_w.clone(), &scalars.t().dot(&d_sc1_pre));
    store_vector(grads, layout.sc1_b.clone(), &d_sc1_pre.sum_axis(Axis(0)));

    let d_seq_pre = relu_back(&d_concat.slice(s![.., ..h]).to_owned(), &cache.seq_pre);
    store_matrix(grads, layout.seq_w.clone(), &cache.flat.t().dot(&d_seq_pre));
    store_vector(grads, layout.seq_b.clone(), &d_seq_pre.sum_axis(Axis(0)));
    let d_flat = d_seq_pre.dot(&weights(params, layout.seq_w.clone(), l * f, h).t());

    let d_conv_act = reshape(d_flat, (b * l, f));
    let d_conv_pre = relu_back(&d_conv_act, &cache.conv_pre);
    store_matrix(grads, layout.conv_w.clone(), &d_conv_pre.t().dot(&cache.im2col));
    store_vector(grads, layout.conv_b.clone(), &d_conv_pre.sum_axis(Axis(0)));
}

/// One PPO update batch for the actor: rows align across all slices.
pub struct ActorBatch<'a> {
    pub obs: &'a BatchObs,
    pub masks: &'a [ActionMask],
    pub actions: &'a [usize],
    pub log_prob_old: &'a [f64],
    pub advantages: &'a [f64],
    pub epsilon: f64,
    pub entropy_coef: f64,
}

impl ActorBatch<'_> {
    fn validate(&self, shape: &NetShape) -> Result<usize, NnError> {
        let b = self.obs.len();
        if b == 0 {
            return Err(NnError::Shape("empty batch".into()));
        }
        if self.masks.len() != b
            || self.actions.len() != b
            || self.log_prob_old.len() != b
            || self.advantages.len() != b
        {
            return Err(NnError::Shape("batch slice lengths disagree".into()));
        }
        if self.obs.seq.ncols() != shape.seq_len {
            return Err(NnError::Shape(format!(
                "sequence width {} vs net {}",
                self.obs.seq.ncols(),
                shape.seq_len
            )));
        }
        for (i, mask) in self.masks.iter().enumerate() {
            if mask.len() != shape.actions {
                return Err(NnError::Shape(format!("mask {i} length vs {} actions", shape.actions)));
            }
            if !mask.allows(self.actions[i]) {
                return Err(NnError::Shape(format!("batch row {i} stores a masked action")));
            }
        }
        Ok(b)
    }
}

pub struct ActorUpdate {
    pub loss: f64,
    pub grads: Vec<f64>,
    /// Fraction of rows whose ratio left the [1−ε, 1+ε] band.
    pub clip_fraction: f64,
    pub entropy: f64,
}

struct ChunkOut {
    loss_sum: f64,
    grads: Vec<f64>,
    clipped: usize,
    entropy_sum: f64,
}

/// Mean clipped-surrogate loss over the batch and its exact gradient.
pub fn actor_loss_and_grad(
    shape: &NetShape,
    params: &[f64],
    batch: &ActorBatch,
) -> Result<ActorUpdate, NnError> {
    let b = batch.validate(shape)?;
    let layout = shape.layout(shape.actions);
    debug_assert_eq!(params.len(), layout.total);

    let starts: Vec<usize> = (0..b).step_by(CHUNK).collect();
    let chunks = starts
        .par_iter()
        .map(|&start| {
            let rows = start..(start + CHUNK).min(b);
            actor_chunk(shape, &layout, params, batch, rows)
        })
        .collect::<Result<Vec<ChunkOut>, NnError>>()?;

    let mut grads = vec![0.0; layout.total];
    let (mut loss_sum, mut clipped, mut entropy_sum) = (0.0, 0, 0.0);
    for c in chunks {
        for (g, cg) in grads.iter_mut().zip(&c.grads) {
            *g += cg;
        }
        loss_sum += c.loss_sum;
        clipped += c.clipped;
        entropy_sum += c.entropy_sum;
    }
    let scale = 1.0 / b as f64;
    for g in &mut grads {
        *g *= scale;
    }
    Ok(ActorUpdate {
        loss: loss_sum * scale,
        grads,
        clip_fraction: clipped as f64 * scale,
        entropy: entropy_sum * scale,
    })
}

fn actor_chunk(
    shape: &NetShape,
    layout: &Layout,
    params: &[f64],
    batch: &ActorBatch,
    rows: Range<usize>,
) -> Result<ChunkOut, NnError> {
    let seq = batch.obs.seq.slice(s![rows.clone(), ..]);
    let scalars = batch.obs.scalars.slice(s![rows.clone(), ..]);
    let cache = trunk_forward(shape, layout, params, seq, scalars);
    let logits = head_forward(layout, params, &cache.concat, shape.actions, shape.hidden);

    let bc = rows.len();
    let mut d_logits = Array2::zeros((bc, shape.actions));
    let (mut loss_sum, mut clipped, mut entropy_sum) = (0.0, 0usize, 0.0);
    for (i, row) in rows.clone().enumerate() {
        let logit_row = logits.row(i);
        let logit_slice = logit_row.as_slice().expect("logits are row-contiguous");
        let mask = &batch.masks[row];
        let probs = masked_softmax(logit_slice, mask)?;
        let action = batch.actions[row];
        let logp_new = masked_log_prob(logit_slice, mask, action)?;
        let adv = batch.advantages[row];
        let ratio = (logp_new - batch.log_prob_old[row]).exp();
        let unclipped = ratio * adv;
        let clamped = ratio.clamp(1.0 - batch.epsilon, 1.0 + batch.epsilon) * adv;
        loss_sum += -unclipped.min(clamped);
        if ratio < 1.0 - batch.epsilon || ratio > 1.0 + batch.epsilon {
            clipped += 1;
        }
        // The active min branch decides the gradient; outside the clip
        // band the clipped branch is constant in the parameters.
        let g = if unclipped <= clamped { -adv * ratio } else { 0.0 };
        let entropy: f64 = probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
        entropy_sum += entropy;
        loss_sum -= batch.entropy_coef * entropy;
        for j in 0..shape.actions {
            let onehot = f64::from(u8::from(j == action));
            let mut d = g * (onehot - probs[j]);
            if batch.entropy_coef != 0.0 && probs[j] > 0.0 {
                d += batch.entropy_coef * probs[j] * (probs[j].ln() + entropy);
            }
            d_logits[(i, j)] = d;
        }
    }

    let mut grads = vec![0.0; layout.total];
    trunk_backward(shape, layout, params, &cache, scalars, &d_logits, &mut grads);
    Ok(ChunkOut { loss_sum, grads, clipped, entropy_sum })
}

/// One value-regression batch for the critic.
pub struct CriticBatch<'a> {
    pub obs: &'a BatchObs,
    pub targets: &'a [f64],
}

pub struct CriticUpdate {
    pub loss: f64,
    pub grads: Vec<f64>,
}

/// Mean squared error against the return targets and its gradient.
pub fn critic_loss_and_grad(
    shape: &NetShape,
    params: &[f64],
    batch: &CriticBatch,
) -> Result<CriticUpdate, NnError> {
    let b = batch.obs.len();
    if b == 0 {
        return Err(NnError::Shape("empty batch".into()));
    }
    if batch.targets.len() != b {
        return Err(NnError::Shape("target length disagrees with batch".into()));
    }
    let layout = shape.layout(1);
    debug_assert_eq!(params.len(), layout.total);

    let starts: Vec<usize> = (0..b).step_by(CHUNK).collect();
    let chunks: Vec<(f64, Vec<f64>)> = starts
        .par_iter()
        .map(|&start| {
            let rows = start..(start + CHUNK).min(b);
            critic_chunk(shape, &layout, params, batch, rows)
        })
        .collect();

    let mut grads = vec![0.0; layout.total];
    let mut loss_sum = 0.0;
    for (l, g) in chunks {
        loss_sum += l;
        for (dst, src) in grads.iter_mut().zip(&g) {
            *dst += src;
        }
    }
    let scale = 1.0 / b as f64;
    for g in &mut grads {
        *g *= scale;
    }
    Ok(CriticUpdate { loss: loss_sum * scale, grads })
}

fn critic_chunk(
    shape: &NetShape,
    layout: &Layout,
    params: &[f64],
    batch: &CriticBatch,
    rows: Range<usize>,
) -> (f64, Vec<f64>) {
    let seq = batch.obs.seq.slice(s![rows.clone(), ..]);
    let scalars = batch.obs.scalars.slice(s![rows.clone(), ..]);
    let cache = trunk_forward(shape, layout, params, seq, scalars);
    let values = head_forward(layout, params, &cache.concat, 1, shape.hidden);

    let bc = rows.len();
    let mut d_logits = Array2::zeros((bc, 1));
    let mut loss_sum = 0.0;
    for (i, row) in rows.clone().enumerate() {
        let d = values[(i, 0)] - batch.targets[row];
        loss_sum += d * d;
        d_logits[(i, 0)] = 2.0 * d;
    }
    let mut grads = vec![0.0; layout.total];
    trunk_backward(shape, layout, params, &cache, scalars, &d_logits, &mut grads);
    (loss_sum, grads)
}

/// Action distribution for one observation: probabilities (exact zeros
/// where masked) plus log probabilities defined only on allowed
/// entries.
pub struct ActorForward {
    pub probs: Vec<f64>,
    logp: Vec<f64>,
    allowed: Vec<bool>,
}

impl ActorForward {
    /// Log probability of an allowed action; `None` when masked.
    pub fn log_prob(&self, action: usize) -> Option<f64> {
        self.allowed
            .get(action)
            .copied()
            .unwrap_or(false)
            .then(|| self.logp[action])
    }
}

pub fn actor_probs(
    shape: &NetShape,
    params: &[f64],
    obs: &Observation,
    mask: &ActionMask,
) -> Result<ActorForward, NnError> {
    if mask.len() != shape.actions {
        return Err(NnError::Shape(format!(
            "mask length {} vs {} actions",
            mask.len(),
            shape.actions
        )));
    }
    let batch = BatchObs::single(shape, obs)?;
    let layout = shape.layout(shape.actions);
    let cache = trunk_forward(shape, &layout, params, batch.seq.view(), batch.scalars.view());
    let logits = head_forward(&layout, params, &cache.concat, shape.actions, shape.hidden);
    let logit_slice = logits.row(0).to_vec();
    let probs = masked_softmax(&logit_slice, mask)?;
    let mut logp = vec![0.0; shape.actions];
    for j in 0..shape.actions {
        if mask.allowed[j] {
            logp[j] = masked_log_prob(&logit_slice, mask, j)?;
        }
    }
    Ok(ActorForward { probs, logp, allowed: mask.allowed.clone() })
}

pub fn critic_value(shape: &NetShape, params: &[f64], obs: &Observation) -> Result<f64, NnError> {
    let batch = BatchObs::single(shape, obs)?;
    let layout = shape.layout(1);
    let cache = trunk_forward(shape, &layout, params, batch.seq.view(), batch.scalars.view());
    let values = head_forward(&layout, params, &cache.concat, 1, shape.hidden);
    Ok(values[(0, 0)])
}

/// fnv-1a over branch decisions; two parameter settings with equal
/// signatures lie on the same smooth piece of the loss.
struct BranchSig(u64);

impl BranchSig {
    fn new() -> Self {
        BranchSig(0xcbf2_9ce4_8422_2325)
    }

    fn push(&mut self, bit: bool) {
        self.0 ^= u64::from(bit);
        self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
    }

    fn push_array(&mut self, pre: &Array2<f64>) {
        for &v in pre {
            self.push(v > 0.0);
        }
    }
}

/// Loss of the actor batch plus the branch signature, for finite
/// differencing. Single-threaded; used on small nets only.
pub fn actor_loss_only(
    shape: &NetShape,
    params: &[f64],
    batch: &ActorBatch,
) -> Result<(f64, u64), NnError> {
    let b = batch.validate(shape)?;
    let layout = shape.layout(shape.actions);
    let cache = trunk_forward(shape, &layout, params, batch.obs.seq.view(), batch.obs.scalars.view());
    let logits = head_forward(&layout, params, &cache.concat, shape.actions, shape.hidden);
    let mut sig = BranchSig::new();
    sig.push_array(&cache.conv_pre);
    sig.push_array(&cache.seq_pre);
    sig.push_array(&cache.sc1_pre);
    sig.push_array(&cache.sc2_pre);
    let mut loss_sum = 0.0;
    for i in 0..b {
        let logit_row = logits.row(i).to_vec();
        let mask = &batch.masks[i];
        let probs = masked_softmax(&logit_row, mask)?;
        let logp_new = masked_log_prob(&logit_row, mask, batch.actions[i])?;
        let adv = batch.advantages[i];
        let ratio = (logp_new - batch.log_prob_old[i]).exp();
        let unclipped = ratio * adv;
        let clamped = ratio.clamp(1.0 - batch.epsilon, 1.0 + batch.epsilon) * adv;
        sig.push(unclipped <= clamped);
        sig.push(ratio < 1.0 - batch.epsilon);
        sig.push(ratio > 1.0 + batch.epsilon);
        loss_sum += -unclipped.min(clamped);
        let entropy: f64 = probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
        loss_sum -= batch.entropy_coef * entropy;
    }
    Ok((loss_sum / b as f64, sig.0))
}

/// Critic analog of [`actor_loss_only`].
pub fn critic_loss_only(
    shape: &NetShape,
    params: &[f64],
    batch: &CriticBatch,
) -> Result<(f64, u64), NnError> {
    let b = batch.obs.len();
    if b == 0 || batch.targets.len() != b {
        return Err(NnError::Shape("bad critic batch".into()));
    }
    let layout = shape.layout(1);
    let cache = trunk_forward(shape, &layout, params, batch.obs.seq.view(), batch.obs.scalars.view());
    let values = head_forward(&layout, params, &cache.concat, 1, shape.hidden);
    let mut sig = BranchSig::new();
    sig.push_array(&cache.conv_pre);
    sig.push_array(&cache.seq_pre);
    sig.push_array(&cache.sc1_pre);
    sig.push_array(&cache.sc2_pre);
    let loss = (0..b)
        .map(|i| {
            let d = values[(i, 0)] - batch.targets[i];
            d * d
        })
        .sum::<f64>()
        / b as f64;
    Ok((loss, sig.0))
}
