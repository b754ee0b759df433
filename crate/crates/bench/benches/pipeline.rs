//! Hot paths: exact solver scaling, greedy decode latency at the
//! largest benchmark size, and the batched network passes that
//! dominate training time.

use assignrl_bench::{ap_instance, env_and_policy};
use assignrl_core::baselines::{exact_solution, greedy_solution};
use assignrl_core::envs::ActionMask;
use assignrl_core::nn::{
    actor_loss_and_grad, critic_loss_and_grad, masked_softmax, ActorBatch, BatchObs, CriticBatch,
};
use assignrl_core::ppo::{collect_episode, DecodeMode, Experience};
use assignrl_core::seeds;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_exact_ap(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_ap");
    for n in [6usize, 8, 10] {
        let inst = ap_instance(n, 5);
        group.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, inst| {
            b.iter(|| exact_solution(inst, 100.0).unwrap());
        });
    }
    group.finish();
}

fn bench_greedy_ap50(c: &mut Criterion) {
    let inst = ap_instance(50, 5);
    c.bench_function("greedy_ap50", |b| {
        b.iter(|| greedy_solution(&inst, 100.0).unwrap());
    });
}

fn bench_greedy_decode_ap50(c: &mut Criterion) {
    let inst = ap_instance(50, 5);
    let (env, params) = env_and_policy(&inst);
    let mut rng = seeds::rng(1);
    let mut group = c.benchmark_group("decode");
    group.sample_size(20);
    group.bench_function("greedy_ap50", |b| {
        b.iter(|| {
            collect_episode(env.as_ref(), &params, 1.0, 1.0, DecodeMode::Greedy, &mut rng).unwrap()
        });
    });
    group.finish();
}

fn bench_masked_softmax(c: &mut Criterion) {
    let logits: Vec<f64> = (0..64).map(|i| ((i * 37) % 23) as f64 / 7.0 - 1.5).collect();
    let mask = ActionMask { allowed: (0..64).map(|i| i % 3 != 0).collect() };
    c.bench_function("masked_softmax_64", |b| {
        b.iter(|| masked_softmax(&logits, &mask).unwrap());
    });
}

/// One PPO minibatch worth of transitions from real rollouts.
fn ap10_batch(rows: usize) -> (assignrl_core::nn::PolicyParams, Vec<Experience>) {
    let inst = ap_instance(10, 5);
    let (env, params) = env_and_policy(&inst);
    let mut rng = seeds::rng(2);
    let mut experiences = Vec::new();
    while experiences.len() < rows {
        let record =
            collect_episode(env.as_ref(), &params, 0.99, 1.0, DecodeMode::Sample, &mut rng).unwrap();
        experiences.extend(record.experiences);
    }
    experiences.truncate(rows);
    (params, experiences)
}

fn bench_batched_passes(c: &mut Criterion) {
    let (params, experiences) = ap10_batch(256);
    let shape = params.shape;
    let rows: Vec<_> = experiences.iter().map(|e| &e.obs).collect();
    let obs = BatchObs::from_rows(&shape, &rows).unwrap();
    let masks: Vec<_> = experiences.iter().map(|e| e.mask.clone()).collect();
    let actions: Vec<_> = experiences.iter().map(|e| e.action).collect();
    let log_prob_old: Vec<_> = experiences.iter().map(|e| e.log_prob_old).collect();
    let advantages: Vec<_> = experiences.iter().map(|e| e.advantage).collect();
    let targets: Vec<_> = experiences.iter().map(|e| e.return_target).collect();
    let actor_batch = ActorBatch {
        obs: &obs,
        masks: &masks,
        actions: &actions,
        log_prob_old: &log_prob_old,
        advantages: &advantages,
        epsilon: 0.2,
        entropy_coef: 0.0,
    };
    let critic_batch = CriticBatch { obs: &obs, targets: &targets };

    let mut group = c.benchmark_group("batch_256_ap10");
    group.sample_size(30);
    group.bench_function("actor_loss_and_grad", |b| {
        b.iter(|| actor_loss_and_grad(&shape, &params.actor, &actor_batch).unwrap());
    });
    group.bench_function("critic_loss_and_grad", |b| {
        b.iter(|| critic_loss_and_grad(&shape, &params.critic, &critic_batch).unwrap());
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_exact_ap,
    bench_greedy_ap50,
    bench_greedy_decode_ap50,
    bench_masked_softmax,
    bench_batched_passes
);
criterion_main!(benches);
