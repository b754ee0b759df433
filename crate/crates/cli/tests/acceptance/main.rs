//! Acceptance gate. Each `criterion_*` test is one pass/fail line in
//! the test output; the assertions pin every tolerance in code.
//!
//! The slow criteria share one trained policy per family through
//! `OnceLock`, so the full gate trains each family exactly once no
//! matter how the tests are ordered.

mod oracles;

use assignrl_core::baselines::{exact_solution, greedy_solution};
use assignrl_core::bench::{evaluate_pretrained, perturbation_sweep, PerturbOutcome};
use assignrl_core::checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CheckpointMeta,
};
use assignrl_core::envs::RewardConfig;
use assignrl_core::instances::{
    generate_instance, make_distribution, GenConfig, Instance, InstanceKind,
};
use assignrl_core::nn::{run_gradcheck_suite, NetShape, PolicyParams};
use assignrl_core::ppo::{evaluate_policy, train, TrainConfig};
use assignrl_core::selftest::{env_conservation, mask_soundness};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

// Pinned tolerances and budgets.
const GRAD_PAIRS: usize = 100;
const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_BUDGET_SECONDS: f64 = 120.0;
const MASK_STATES: usize = 10_000;
const MASK_DRAWS: usize = 100_000;
const MASK_SUM_TOLERANCE: f64 = 1e-9;
const CONSERVATION_EPISODES: usize = 1_000;
const CONSERVATION_MAX_TASKS: usize = 50;
const ORACLE_SMALL_PER_KIND: usize = 200;
const ORACLE_SMALL_MAX: usize = 6;
const ORACLE_GREEDY_INSTANCES: usize = 500;
const ORACLE_GREEDY_MAX: usize = 10;
const AP10_MEAN_GAP_TOLERANCE: f64 = 0.10;
const AP10_BEAT_GREEDY_SHARE: f64 = 0.70;
const AP10_HELDOUT_SEEDS: usize = 20;
const AP10_TRAIN_BUDGET_SECONDS: f64 = 1800.0;
const PERTURB_DELTA: i64 = 5;
const PERTURB_MEAN_GAP_TOLERANCE: f64 = 0.15;
const PERTURB_DOMINANCE_SHARE: f64 = 0.50;
const DECODE_BUDGET_SECONDS: f64 = 1.0;

const DIST_SEED: u64 = 7;
const MASTER_SEED: u64 = 12345;
/// Held-out evaluation block, far above both the training indices
/// (which count up from 0) and the early-stop indices (1_000_000..).
const HELDOUT_BASE: u64 = 2_000_000;
/// The instance the perturbation protocol grows from.
const PERTURB_BASE_INDEX: u64 = 3_000_000;

struct TrainedPolicy {
    params: PolicyParams,
    reward: RewardConfig,
    seconds: f64,
    episodes_run: usize,
}

/// Train one family at size 10 with the experiment hyperparameters,
/// stopping early once evaluation comes within `stop_gap` of the exact
/// references where an exact solver exists at this size.
fn train_family(kind: InstanceKind, train_cfg: TrainConfig) -> TrainedPolicy {
    let dist = make_distribution(kind, 10, DIST_SEED, &GenConfig::default()).unwrap();
    let reward = RewardConfig::default_for(&dist.sample(0));
    let refs: Option<Vec<f64>> = train_cfg.stop_gap.map(|_| {
        train_cfg
            .eval_seeds
            .iter()
            .map(|&idx| {
                let inst = dist.sample(idx);
                let sol = exact_solution(&inst, reward.worker_penalty).unwrap();
                match inst {
                    Instance::Bin(_) => {
                        reward.worker_penalty * sol.workers_used as f64 - sol.total_cost
                    }
                    _ => sol.objective(reward.worker_penalty),
                }
            })
            .collect()
    });
    let started = Instant::now();
    let result = train(dist.as_ref(), reward, &train_cfg, MASTER_SEED, refs.as_deref()).unwrap();
    TrainedPolicy {
        params: result.params,
        reward,
        seconds: started.elapsed().as_secs_f64(),
        episodes_run: result.episodes_run,
    }
}

fn ap10() -> &'static TrainedPolicy {
    static POLICY: OnceLock<TrainedPolicy> = OnceLock::new();
    POLICY.get_or_init(|| {
        // The experiment recipe, pinned: any drift in the defaults
        // fails here rather than silently training differently.
        let cfg = TrainConfig { stop_gap: Some(0.05), ..TrainConfig::default() };
        assert_eq!(cfg.gamma, 0.99);
        assert_eq!(cfg.clip_epsilon, 0.2);
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.lr_decay, 0.001);
        assert_eq!(cfg.epochs_per_episode, 20);
        assert_eq!(cfg.batch_size, 256);
        assert_eq!(cfg.buffer_capacity, 1000);
        train_family(InstanceKind::Ap, cfg)
    })
}

fn bin10() -> &'static TrainedPolicy {
    static POLICY: OnceLock<TrainedPolicy> = OnceLock::new();
    POLICY.get_or_init(|| {
        let cfg = TrainConfig {
            episodes: 120,
            stop_gap: Some(0.02),
            ..TrainConfig::default()
        };
        train_family(InstanceKind::Bin, cfg)
    })
}

fn vrp10() -> &'static TrainedPolicy {
    static POLICY: OnceLock<TrainedPolicy> = OnceLock::new();
    POLICY.get_or_init(|| {
        // No exact routing reference at this size, so no early stop.
        let cfg = TrainConfig { episodes: 120, ..TrainConfig::default() };
        train_family(InstanceKind::Vrp, cfg)
    })
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let report = run_gradcheck_suite(GRAD_PAIRS, 42, GRAD_TOLERANCE).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "gradcheck: {} comparisons, {} skipped, max rel err {:.3e}, {:.2}s",
        report.checked, report.skipped, report.max_rel_err, elapsed
    );
    assert!(report.checked > 10_000, "suite must actually compare parameters");
    assert!(
        report.max_rel_err < GRAD_TOLERANCE,
        "max relative error {:.3e} breaches {GRAD_TOLERANCE:e}",
        report.max_rel_err
    );
    assert!(elapsed < GRAD_BUDGET_SECONDS, "{elapsed:.1}s over the {GRAD_BUDGET_SECONDS}s budget");
}

#[test]
fn criterion_2_masked_policy_soundness() {
    let report = mask_soundness(MASK_STATES, MASK_DRAWS, 42)
        .expect("no masking violation across the sweep");
    println!(
        "mask sweep: {} states, {} draws, max sum err {:.3e}",
        report.states, report.draws, report.max_sum_err
    );
    assert_eq!(report.states, MASK_STATES);
    assert!(report.draws >= MASK_DRAWS);
    assert!(report.max_sum_err <= MASK_SUM_TOLERANCE);
}

#[test]
fn criterion_3_environment_conservation() {
    let report = env_conservation(CONSERVATION_EPISODES, CONSERVATION_MAX_TASKS, 42)
        .expect("no conservation violation across the sweep");
    println!(
        "conservation: {} episodes, {} steps, drift {:.3e}",
        report.episodes, report.steps, report.max_reward_drift
    );
    assert_eq!(report.episodes, CONSERVATION_EPISODES);
    assert!(report.max_reward_drift <= 1e-9);
}

#[test]
fn criterion_4_oracle_soundness() {
    let gen = GenConfig::default();
    // Exact solvers agree with independent enumeration at n <= 6.
    for i in 0..ORACLE_SMALL_PER_KIND {
        let n = 2 + i % (ORACLE_SMALL_MAX - 1);
        let seed = 9_000 + i as u64;
        let lambda = [0.0, 55.0, 100.0][i % 3];

        let Instance::Ap(ap) = generate_instance(InstanceKind::Ap, n, seed, &gen).unwrap() else {
            unreachable!()
        };
        let sol = exact_solution(&Instance::Ap(ap.clone()), lambda).unwrap();
        assert!(sol.optimal);
        let reference = oracles::brute_force_ap(&ap, lambda).expect("generator output is servable");
        assert!(
            (sol.objective(lambda) - reference).abs() <= 1e-9,
            "assignment n={n} seed={seed} lambda={lambda}: {} vs enumerated {reference}",
            sol.objective(lambda)
        );

        let Instance::Bin(bin) = generate_instance(InstanceKind::Bin, n, seed, &gen).unwrap()
        else {
            unreachable!()
        };
        let sol = exact_solution(&Instance::Bin(bin.clone()), 0.0).unwrap();
        let (value, bins) = oracles::brute_force_bin(&bin);
        assert_eq!(sol.total_cost, value as f64, "packing value n={n} seed={seed}");
        assert_eq!(sol.workers_used, bins, "packing bins n={n} seed={seed}");

        let Instance::Vrp(vrp) = generate_instance(InstanceKind::Vrp, n, seed, &gen).unwrap()
        else {
            unreachable!()
        };
        let sol = exact_solution(&Instance::Vrp(vrp.clone()), 0.0).unwrap();
        let reference = oracles::brute_force_vrp(&vrp).expect("generator output is servable");
        assert!(
            (sol.total_cost - reference).abs() <= 1e-9,
            "routing n={n} seed={seed}: {} vs enumerated {reference}",
            sol.total_cost
        );
    }

    // The exact assignment solver never loses to the greedy heuristic.
    for i in 0..ORACLE_GREEDY_INSTANCES {
        let n = 2 + i % (ORACLE_GREEDY_MAX - 1);
        let seed = 40_000 + i as u64;
        let lambda = [0.0, 100.0][i % 2];
        let inst = generate_instance(InstanceKind::Ap, n, seed, &gen).unwrap();
        let exact = exact_solution(&inst, lambda).unwrap();
        let greedy = greedy_solution(&inst, lambda).unwrap();
        assert!(
            exact.objective(lambda) <= greedy.objective(lambda) + 1e-9,
            "n={n} seed={seed} lambda={lambda}: exact {} > greedy {}",
            exact.objective(lambda),
            greedy.objective(lambda)
        );
    }
}

#[test]
fn criterion_5_training_quality_ap10() {
    let trained = ap10();
    println!(
        "ap10 training: {} episodes in {:.1}s",
        trained.episodes_run, trained.seconds
    );
    assert!(
        trained.seconds <= AP10_TRAIN_BUDGET_SECONDS,
        "training took {:.1}s, budget {AP10_TRAIN_BUDGET_SECONDS}s",
        trained.seconds
    );

    let dist = make_distribution(InstanceKind::Ap, 10, DIST_SEED, &GenConfig::default()).unwrap();
    let lambda = trained.reward.worker_penalty;
    let indices: Vec<u64> = (0..AP10_HELDOUT_SEEDS as u64).map(|i| HELDOUT_BASE + i).collect();
    let metrics = evaluate_policy(dist.as_ref(), &trained.params, trained.reward, &indices).unwrap();

    let mut gaps = Vec::new();
    let mut beat_or_tie = 0usize;
    for (k, &idx) in indices.iter().enumerate() {
        let inst = dist.sample(idx);
        let exact = exact_solution(&inst, lambda).unwrap().objective(lambda);
        let greedy = greedy_solution(&inst, lambda).unwrap().objective(lambda);
        let rl = metrics[k];
        assert!(rl >= exact - 1e-9, "policy cannot beat the exact optimum");
        gaps.push((rl - exact) / exact);
        if rl <= greedy + 1e-9 {
            beat_or_tie += 1;
        }
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    println!(
        "ap10 held-out: mean gap {:.2}% vs exact, beats/ties greedy on {}/{}",
        mean_gap * 100.0,
        beat_or_tie,
        indices.len()
    );
    assert!(
        mean_gap <= AP10_MEAN_GAP_TOLERANCE,
        "mean held-out gap {:.3} breaches {AP10_MEAN_GAP_TOLERANCE}",
        mean_gap
    );
    assert!(
        beat_or_tie as f64 >= AP10_BEAT_GREEDY_SHARE * indices.len() as f64,
        "beats/ties greedy on only {beat_or_tie}/{} held-out instances",
        indices.len()
    );
}

/// Mean objective gap vs the exact rows of a sweep, and the share of
/// rows where the policy matches or beats greedy.
fn sweep_stats(outcomes: &[PerturbOutcome], lambda: f64, maximize: bool) -> (Option<f64>, f64) {
    let mut gaps = Vec::new();
    let mut dominated = 0usize;
    for o in outcomes {
        if let Some((exact, _)) = &o.exact {
            let (rl, ex) = (o.rl.objective(lambda), exact.objective(lambda));
            gaps.push(if maximize { (ex - rl) / ex } else { (rl - ex) / ex });
        }
        let (greedy, _) = o.greedy.as_ref().expect("sweep ran with greedy enabled");
        let better = if maximize {
            o.rl.total_cost >= greedy.total_cost - 1e-9
        } else {
            o.rl.objective(lambda) <= greedy.objective(lambda) + 1e-9
        };
        if better {
            dominated += 1;
        }
    }
    let mean_gap = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
    (mean_gap, dominated as f64 / outcomes.len() as f64)
}

#[test]
fn criterion_6_dynamic_adaptation_without_retraining() {
    let ks: Vec<usize> = (1..=10).collect();

    // Assignment: the criterion-5 checkpoint, with paired exact reruns.
    let trained = ap10();
    let dist = make_distribution(InstanceKind::Ap, 10, DIST_SEED, &GenConfig::default()).unwrap();
    let base = dist.sample(PERTURB_BASE_INDEX);
    let outcomes = perturbation_sweep(
        &trained.params,
        &base,
        trained.reward,
        &ks,
        PERTURB_DELTA,
        None,
        true,
        true,
    )
    .expect("every perturbation level decodes feasibly");
    assert_eq!(outcomes.len(), ks.len());
    let (mean_gap, _) = sweep_stats(&outcomes, trained.reward.worker_penalty, false);
    let mean_gap = mean_gap.expect("exact reruns exist at this size");
    println!("ap10 perturbation sweep: mean gap {:.2}% vs exact", mean_gap * 100.0);
    assert!(
        mean_gap <= PERTURB_MEAN_GAP_TOLERANCE,
        "mean perturbation gap {:.3} breaches {PERTURB_MEAN_GAP_TOLERANCE}",
        mean_gap
    );

    // Packing: feasibility plus value parity with greedy on most rows.
    let trained = bin10();
    let dist = make_distribution(InstanceKind::Bin, 10, DIST_SEED, &GenConfig::default()).unwrap();
    let base = dist.sample(PERTURB_BASE_INDEX);
    let outcomes = perturbation_sweep(
        &trained.params,
        &base,
        trained.reward,
        &ks,
        PERTURB_DELTA,
        None,
        false,
        true,
    )
    .expect("every perturbation level decodes feasibly");
    let (_, dominance) = sweep_stats(&outcomes, trained.reward.worker_penalty, true);
    println!("bin10 perturbation sweep: beats/ties greedy on {:.0}% of rows", dominance * 100.0);
    assert!(
        dominance >= PERTURB_DOMINANCE_SHARE,
        "packing policy matches greedy on only {:.0}% of rows",
        dominance * 100.0
    );

    // Routing: feasibility plus distance parity with greedy on most rows.
    let trained = vrp10();
    let dist = make_distribution(InstanceKind::Vrp, 10, DIST_SEED, &GenConfig::default()).unwrap();
    let base = dist.sample(PERTURB_BASE_INDEX);
    let outcomes = perturbation_sweep(
        &trained.params,
        &base,
        trained.reward,
        &ks,
        PERTURB_DELTA,
        None,
        false,
        true,
    )
    .expect("every perturbation level decodes feasibly");
    let (_, dominance) = sweep_stats(&outcomes, trained.reward.worker_penalty, false);
    println!("vrp10 perturbation sweep: beats/ties greedy on {:.0}% of rows", dominance * 100.0);
    assert!(
        dominance >= PERTURB_DOMINANCE_SHARE,
        "routing policy beats greedy on only {:.0}% of rows",
        dominance * 100.0
    );
}

#[test]
fn criterion_7_inference_speed_ap50() {
    let inst = generate_instance(InstanceKind::Ap, 50, 5, &GenConfig::default()).unwrap();
    let shape = NetShape::for_instance(inst.task_count(), inst.worker_count());
    let params = PolicyParams::init(shape, 11).unwrap();
    let rcfg = RewardConfig::default_for(&inst);
    let (solution, seconds) = evaluate_pretrained(&params, &inst, rcfg).unwrap();
    println!("ap50 greedy decode: {seconds:.4}s, objective {}", solution.objective(rcfg.worker_penalty));
    assert!(
        seconds < DECODE_BUDGET_SECONDS,
        "decode took {seconds:.3}s, budget {DECODE_BUDGET_SECONDS}s"
    );
}

#[test]
fn criterion_8_determinism_and_persistence() {
    // Checkpoint save/load roundtrips bit-exactly.
    let shape = NetShape::for_instance(10, 12);
    let params = PolicyParams::init(shape, 99).unwrap();
    let meta = CheckpointMeta {
        family: InstanceKind::Ap,
        task_count: 10,
        worker_count: 12,
        base_seed: DIST_SEED,
        train_seed: MASTER_SEED,
        gen: GenConfig::default(),
        reward: RewardConfig { worker_penalty: 100.0, depot_return: true },
        train: TrainConfig::default(),
        shape,
    };
    let ckpt = Checkpoint::new(meta, &params);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    save_checkpoint(&path, &ckpt).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.meta, ckpt.meta);
    let same_bits = |a: &[f64], b: &[f64]| {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
    };
    assert!(same_bits(&loaded.actor, &ckpt.actor));
    assert!(same_bits(&loaded.critic, &ckpt.critic));
    assert_eq!(
        encode_checkpoint(&decode_checkpoint(&encode_checkpoint(&ckpt).unwrap()).unwrap())
            .unwrap(),
        encode_checkpoint(&ckpt).unwrap()
    );

    // A rerun with the same master seed reproduces evaluation costs.
    let dist = make_distribution(InstanceKind::Ap, 4, 3, &GenConfig::default()).unwrap();
    let rcfg = RewardConfig::default_for(&dist.sample(0));
    let cfg = TrainConfig { episodes: 3, ..TrainConfig::default() };
    let a = train(dist.as_ref(), rcfg, &cfg, 777, None).unwrap();
    let b = train(dist.as_ref(), rcfg, &cfg, 777, None).unwrap();
    let evals = |r: &assignrl_core::ppo::TrainResult| {
        r.evals.iter().map(|e| e.per_seed.clone()).collect::<Vec<_>>()
    };
    assert_eq!(evals(&a), evals(&b), "same master seed, same evaluation costs");
    assert!(same_bits(&a.params.actor, &b.params.actor));

    // The invariant suites pass through the shipped binary.
    let selftest = Command::new(env!("CARGO_BIN_EXE_assignrl"))
        .arg("selftest")
        .output()
        .expect("binary spawns");
    assert!(
        selftest.status.success(),
        "selftest: {}",
        String::from_utf8_lossy(&selftest.stderr)
    );
    let gradcheck = Command::new(env!("CARGO_BIN_EXE_assignrl"))
        .arg("gradcheck")
        .output()
        .expect("binary spawns");
    assert!(
        gradcheck.status.success(),
        "gradcheck: {}",
        String::from_utf8_lossy(&gradcheck.stderr)
    );
}
