//! One policy update: several epochs of seeded-shuffle minibatches
//! over the replay buffer, stepping actor and critic with separate
//! optimizers.

use super::{PpoError, RolloutBuffer, TrainConfig};
use crate::envs::{ActionMask, Observation};
use crate::nn::{
    actor_loss_and_grad, critic_loss_and_grad, ActorBatch, Adam, BatchObs, CriticBatch,
    PolicyParams,
};
use crate::seeds::{self, tags};
use rand::seq::SliceRandom;

/// Loss curves and clipping diagnostics for one update call.
#[derive(Debug, Clone)]
pub struct UpdateStats {
    /// Mean surrogate loss per epoch, in epoch order.
    pub actor_losses: Vec<f64>,
    /// Mean squared value error per epoch.
    pub critic_losses: Vec<f64>,
    /// Transition-weighted share of rows whose ratio left the clip
    /// band, over the whole update.
    pub clip_fraction: f64,
    /// Transition-weighted mean policy entropy.
    pub entropy: f64,
    pub batches: usize,
}

/// Run `epochs_per_episode` passes over the buffer in minibatches of
/// at most `batch_size`, reshuffling each epoch from `shuffle_seed`.
/// Advantages are centered and scaled once across the buffer when
/// configured. Updating from an empty buffer is a usage error.
pub fn update_policy(
    params: &mut PolicyParams,
    actor_opt: &mut Adam,
    critic_opt: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    shuffle_seed: u64,
) -> Result<UpdateStats, PpoError> {
    cfg.validate()?;
    let len = buffer.len();
    if len == 0 {
        return Err(PpoError::Config("update_policy called on an empty buffer".into()));
    }

    let advantages: Vec<f64> = if cfg.normalize_advantages {
        normalize(buffer.iter().map(|e| e.advantage))
    } else {
        buffer.iter().map(|e| e.advantage).collect()
    };

    let mut stats = UpdateStats {
        actor_losses: Vec::with_capacity(cfg.epochs_per_episode),
        critic_losses: Vec::with_capacity(cfg.epochs_per_episode),
        clip_fraction: 0.0,
        entropy: 0.0,
        batches: 0,
    };
    let mut rows_seen = 0usize;

    let mut order: Vec<usize> = (0..len).collect();
    for epoch in 0..cfg.epochs_per_episode {
        let mut rng = seeds::rng(seeds::mix_indexed(shuffle_seed, tags::SHUFFLE, epoch as u64));
        order.shuffle(&mut rng);

        let mut epoch_actor = 0.0;
        let mut epoch_critic = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<&Observation> = chunk.iter().map(|&i| &buffer.get(i).obs).collect();
            let obs = BatchObs::from_rows(&params.shape, &rows)?;
            let masks: Vec<ActionMask> =
                chunk.iter().map(|&i| buffer.get(i).mask.clone()).collect();
            let actions: Vec<usize> = chunk.iter().map(|&i| buffer.get(i).action).collect();
            let log_prob_old: Vec<f64> =
                chunk.iter().map(|&i| buffer.get(i).log_prob_old).collect();
            let advs: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();
            let targets: Vec<f64> =
                chunk.iter().map(|&i| buffer.get(i).return_target).collect();

            let actor_batch = ActorBatch {
                obs: &obs,
                masks: &masks,
                actions: &actions,
                log_prob_old: &log_prob_old,
                advantages: &advs,
                epsilon: cfg.clip_epsilon,
                entropy_coef: cfg.entropy_coef,
            };
            let actor = actor_loss_and_grad(&params.shape, &params.actor, &actor_batch)?;
            actor_opt.step(&mut params.actor, &actor.grads);

            let critic_batch = CriticBatch { obs: &obs, targets: &targets };
            let critic = critic_loss_and_grad(&params.shape, &params.critic, &critic_batch)?;
            critic_opt.step(&mut params.critic, &critic.grads);

            let w = chunk.len() as f64;
            epoch_actor += actor.loss * w;
            epoch_critic += critic.loss * w;
            stats.clip_fraction += actor.clip_fraction * w;
            stats.entropy += actor.entropy * w;
            stats.batches += 1;
            rows_seen += chunk.len();
        }
        stats.actor_losses.push(epoch_actor / len as f64);
        stats.critic_losses.push(epoch_critic / len as f64);
    }
    stats.clip_fraction /= rows_seen as f64;
    stats.entropy /= rows_seen as f64;
    Ok(stats)
}

/// Center to zero mean, scale to unit deviation; the small floor keeps
/// constant advantages at exactly zero rather than amplifying noise.
fn normalize(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let vals: Vec<f64> = values.collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = var.sqrt() + 1e-8;
    vals.iter().map(|v| (v - mean) / scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, Environment, RewardConfig};
    use crate::instances::{generate_ap_instance, GenConfig, Instance};
    use crate::nn::NetShape;
    use crate::ppo::{collect_episode, DecodeMode};

    fn setup(n: usize) -> (Box<dyn Environment>, PolicyParams, RolloutBuffer) {
        let cfg = GenConfig { effort_cap: 10, ..GenConfig::default() };
        let inst = generate_ap_instance(n, 5, &cfg).unwrap();
        let shape = NetShape {
            conv_filters: 4,
            hidden: 8,
            ..NetShape::for_instance(inst.task_count(), inst.worker_count())
        };
        let env = make_env(&Instance::Ap(inst), RewardConfig::default()).unwrap();
        let params = PolicyParams::init(shape, 31).unwrap();
        let mut buffer = RolloutBuffer::new(64);
        let mut rng = crate::seeds::rng(2);
        for _ in 0..4 {
            let rec = collect_episode(env.as_ref(), &params, 0.99, 1.0, DecodeMode::Sample, &mut rng)
                .unwrap();
            buffer.extend(rec.experiences);
        }
        (env, params, buffer)
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig { epochs_per_episode: 3, batch_size: 8, ..TrainConfig::default() }
    }

    #[test]
    fn empty_buffer_is_a_usage_error() {
        let (_, mut params, _) = setup(3);
        let buffer = RolloutBuffer::new(10);
        let mut a = Adam::new(params.actor.len(), 1e-4, 0.0);
        let mut c = Adam::new(params.critic.len(), 1e-4, 0.0);
        let err = update_policy(&mut params, &mut a, &mut c, &buffer, &small_cfg(), 0);
        assert!(matches!(err, Err(PpoError::Config(_))));
    }

    #[test]
    fn update_is_bit_reproducible() {
        let (_, params0, buffer) = setup(4);
        let cfg = small_cfg();
        let run = || {
            let mut params = params0.clone();
            let mut a = Adam::new(params.actor.len(), cfg.learning_rate, cfg.lr_decay);
            let mut c = Adam::new(params.critic.len(), cfg.learning_rate, cfg.lr_decay);
            let stats =
                update_policy(&mut params, &mut a, &mut c, &buffer, &cfg, 77).unwrap();
            (params, stats)
        };
        let (pa, sa) = run();
        let (pb, sb) = run();
        assert_eq!(pa.actor, pb.actor);
        assert_eq!(pa.critic, pb.critic);
        assert_eq!(sa.actor_losses, sb.actor_losses);
        assert_eq!(sa.critic_losses, sb.critic_losses);
    }

    #[test]
    fn different_shuffle_seeds_change_the_trajectory() {
        let (_, params0, buffer) = setup(4);
        let cfg = small_cfg();
        let run = |seed: u64| {
            let mut params = params0.clone();
            let mut a = Adam::new(params.actor.len(), cfg.learning_rate, cfg.lr_decay);
            let mut c = Adam::new(params.critic.len(), cfg.learning_rate, cfg.lr_decay);
            update_policy(&mut params, &mut a, &mut c, &buffer, &cfg, seed).unwrap();
            params
        };
        // Same data, different batch composition; with more than one
        // batch per epoch the optimizer path differs.
        assert_ne!(run(1).actor, run(2).actor);
    }

    #[test]
    fn constant_advantages_normalize_to_zero_and_freeze_the_actor() {
        let (_, mut params, mut buffer) = setup(3);
        let forced: Vec<_> = buffer
            .iter()
            .map(|e| {
                let mut e = e.clone();
                e.advantage = 2.5;
                e
            })
            .collect();
        buffer.clear();
        buffer.extend(forced);
        let before = params.actor.clone();
        let critic_before = params.critic.clone();
        let mut a = Adam::new(params.actor.len(), 1e-4, 0.0);
        let mut c = Adam::new(params.critic.len(), 1e-4, 0.0);
        let cfg = TrainConfig { entropy_coef: 0.0, ..small_cfg() };
        let stats = update_policy(&mut params, &mut a, &mut c, &buffer, &cfg, 5).unwrap();
        // Zero advantage everywhere nulls the surrogate gradient; the
        // critic still regresses its targets.
        assert_eq!(params.actor, before);
        assert_ne!(params.critic, critic_before);
        assert!(stats.actor_losses.iter().all(|&l| l.abs() < 1e-12));
    }

    #[test]
    fn critic_loss_falls_over_epochs() {
        let (_, mut params, buffer) = setup(4);
        let mut a = Adam::new(params.actor.len(), 1e-3, 0.0);
        let mut c = Adam::new(params.critic.len(), 1e-3, 0.0);
        let cfg = TrainConfig { epochs_per_episode: 30, batch_size: 64, ..TrainConfig::default() };
        let stats = update_policy(&mut params, &mut a, &mut c, &buffer, &cfg, 9).unwrap();
        let first = stats.critic_losses.first().unwrap();
        let last = stats.critic_losses.last().unwrap();
        assert!(last < first, "critic did not improve: {first} -> {last}");
    }

    #[test]
    fn unclipped_update_matches_vanilla_policy_gradient() {
        // With the clip band effectively infinite and log_prob_old
        // taken at the current parameters (ratio = 1), the surrogate
        // gradient must equal the plain policy gradient
        // d/dtheta [-A * log pi(a)], checked here by central
        // differences on the log-probability itself.
        use crate::nn::{actor_probs, ActorBatch};

        let cfg = GenConfig { effort_cap: 10, ..GenConfig::default() };
        let inst = generate_ap_instance(2, 9, &cfg).unwrap();
        let shape = NetShape {
            conv_filters: 2,
            hidden: 4,
            ..NetShape::for_instance(inst.task_count(), inst.worker_count())
        };
        let env = make_env(&Instance::Ap(inst), RewardConfig::default()).unwrap();
        let params = PolicyParams::init(shape, 17).unwrap();
        let mut state = env.reset();
        // Advance one step: the fresh state's scalar inputs are exactly
        // zero, which parks the scalar-branch biases on the ReLU kink
        // where central differences disagree with the subgradient.
        let first = env.action_mask(&state).unwrap().allowed.iter().position(|&a| a).unwrap();
        env.step(&mut state, first).unwrap();
        let obs = env.observe(&state);
        let mask = env.action_mask(&state).unwrap();
        let action = mask.allowed.iter().position(|&a| a).unwrap();
        let advantage = 1.7;

        let fwd = actor_probs(&params.shape, &params.actor, &obs, &mask).unwrap();
        let logp_now = fwd.log_prob(action).unwrap();
        let batch_obs = BatchObs::single(&params.shape, &obs).unwrap();
        let batch = ActorBatch {
            obs: &batch_obs,
            masks: std::slice::from_ref(&mask),
            actions: &[action],
            log_prob_old: &[logp_now],
            advantages: &[advantage],
            epsilon: 1e12,
            entropy_coef: 0.0,
        };
        let update = actor_loss_and_grad(&params.shape, &params.actor, &batch).unwrap();
        assert_eq!(update.clip_fraction, 0.0);

        let h = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..params.actor.len() {
            let mut plus = params.actor.clone();
            plus[k] += h;
            let mut minus = params.actor.clone();
            minus[k] -= h;
            let lp = actor_probs(&params.shape, &plus, &obs, &mask)
                .unwrap()
                .log_prob(action)
                .unwrap();
            let lm = actor_probs(&params.shape, &minus, &obs, &mask)
                .unwrap()
                .log_prob(action)
                .unwrap();
            let fd = -advantage * (lp - lm) / (2.0 * h);
            let rel = (fd - update.grads[k]).abs() / fd.abs().max(update.grads[k].abs()).max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-5, "max deviation {worst}");
    }
}
