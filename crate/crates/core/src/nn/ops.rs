//! Scalar building blocks: the masked softmax and the two losses.

use super::NnError;
use crate::envs::ActionMask;

/// Softmax restricted to allowed entries; masked entries get exactly
/// zero probability. Max-subtraction keeps huge logits finite.
pub fn masked_softmax(logits: &[f64], mask: &ActionMask) -> Result<Vec<f64>, NnError> {
    if logits.len() != mask.len() {
        return Err(NnError::Shape(format!(
            "{} logits vs {} mask entries",
            logits.len(),
            mask.len()
        )));
    }
    let max = allowed_max(logits, mask)?;
    let mut probs = vec![0.0; logits.len()];
    let mut z = 0.0;
    for (j, &l) in logits.iter().enumerate() {
        if mask.allowed[j] {
            let e = (l - max).exp();
            probs[j] = e;
            z += e;
        }
    }
    for p in &mut probs {
        *p /= z;
    }
    Ok(probs)
}

/// Log probability of `action` under the masked softmax, computed in
/// log space so masked or tiny probabilities never round through zero.
pub fn masked_log_prob(logits: &[f64], mask: &ActionMask, action: usize) -> Result<f64, NnError> {
    if !mask.allows(action) {
        return Err(NnError::Shape(format!("log prob of masked action {action}")));
    }
    let max = allowed_max(logits, mask)?;
    let z: f64 = logits
        .iter()
        .zip(&mask.allowed)
        .filter(|&(_, &a)| a)
        .map(|(&l, _)| (l - max).exp())
        .sum();
    Ok(logits[action] - max - z.ln())
}

fn allowed_max(logits: &[f64], mask: &ActionMask) -> Result<f64, NnError> {
    logits
        .iter()
        .zip(&mask.allowed)
        .filter(|&(_, &a)| a)
        .map(|(&l, _)| l)
        .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.max(l))))
        .ok_or(NnError::AllMasked)
}

/// Clipped surrogate for one step: −min(ratio·A, clip(ratio, 1±ε)·A),
/// with ratio = exp(log π_new − log π_old). Negated so minimizing it
/// maximizes the clipped objective.
pub fn ppo_clip_loss(log_prob_new: f64, log_prob_old: f64, advantage: f64, epsilon: f64) -> f64 {
    let ratio = (log_prob_new - log_prob_old).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    -unclipped.min(clipped)
}

pub fn mse_loss(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    d * d
}
