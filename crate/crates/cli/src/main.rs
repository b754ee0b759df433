//! `assignrl`: train, solve and benchmark masked-PPO policies for
//! capacity-constrained assignment problems.
//!
//! Exit codes: 0 success, 1 usage (bad flags, unreadable or mismatched
//! inputs), 2 infeasibility (an instance that cannot be served), 3
//! violated internal invariant (failed gradient or invariant suite,
//! solution that does not revalidate).

use assignrl_core::baselines::{exact_solution, BaselineError};
use assignrl_core::bench::{
    emit_report, perturbation_sweep, run_benchmark, solution_from_episode, sweep_report,
    BenchError, BenchTask, Method, ReportFormat,
};
use assignrl_core::checkpoint::{
    load_checkpoint, save_checkpoint, sha256_hex, Checkpoint, CheckpointError, CheckpointMeta,
};
use assignrl_core::envs::{make_env, EnvError, RewardConfig};
use assignrl_core::instances::{
    generate_instance, make_distribution, parse_instance, serialize_instance, GenConfig, Instance,
    InstanceKind,
};
use assignrl_core::nn::{run_gradcheck_suite, NetShape, PolicyParams};
use assignrl_core::ppo::{collect_episode, train, DecodeMode, PpoError, TrainConfig};
use assignrl_core::seeds::{self, tags};
use assignrl_core::selftest::{env_conservation, mask_soundness, SelftestError};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "assignrl", version, about = "Masked actor-critic PPO for assignment problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random instance and write it as JSON.
    Gen(GenArgs),
    /// Train a policy on a seeded instance distribution.
    Train(TrainArgs),
    /// Decode a trained policy on one instance file.
    Solve(SolveArgs),
    /// Compare methods over a size x seed grid and emit a report.
    Bench(BenchArgs),
    /// Re-infer on perturbed copies of an instance, no retraining.
    PerturbEval(PerturbEvalArgs),
    /// Check analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the masking and environment invariant suites.
    Selftest(SelftestArgs),
}

/// Optional JSON file bundling generator, training and reward settings.
/// Command-line flags override whatever the file sets.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    gen: GenConfig,
    train: TrainConfig,
    /// `None` derives the penalty from each instance.
    reward: Option<RewardConfig>,
}

#[derive(Args)]
struct GenArgs {
    /// Problem family: ap, bin or vrp.
    #[arg(long)]
    kind: InstanceKind,
    /// Number of tasks / items / customers.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Run-config JSON (the `gen` section applies here).
    #[arg(long, alias = "cfg")]
    config: Option<PathBuf>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    kind: InstanceKind,
    #[arg(long)]
    n: usize,
    /// Master seed: fixes the instance distribution and, unless
    /// --train-seed is given, the whole training run.
    #[arg(long)]
    seed: u64,
    /// Training-run seed when it should differ from the distribution seed.
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured episode budget.
    #[arg(long)]
    episodes: Option<usize>,
    /// Override the worker-activation penalty.
    #[arg(long)]
    worker_penalty: Option<f64>,
    /// Do not charge return-to-depot legs (routing only).
    #[arg(long)]
    no_depot_return: bool,
    /// Drop the replay window every episode instead of FIFO eviction.
    #[arg(long)]
    clear_buffer: bool,
    /// Stop early once the evaluation mean is within this relative gap
    /// of the exact solver on the evaluation seeds.
    #[arg(long)]
    stop_gap: Option<f64>,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    /// Greedy decode (the default).
    #[arg(long, conflicts_with = "sample")]
    greedy: bool,
    /// Sample from the masked distribution instead of greedy decode.
    #[arg(long)]
    sample: bool,
    /// Seed for --sample decoding.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    worker_penalty: Option<f64>,
    #[arg(long)]
    no_depot_return: bool,
    /// Report path; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "ap")]
    kind: InstanceKind,
    /// Comma-separated instance sizes, e.g. 10,20,50.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Instances per size (generator seeds 0..seeds).
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Comma-separated subset of rl,exact,greedy.
    #[arg(long, value_delimiter = ',', default_values_t = [Method::Rl, Method::Exact, Method::Greedy])]
    methods: Vec<Method>,
    /// Directory holding `<kind><size>.ckpt` policies (required for rl).
    #[arg(long)]
    policies: Option<PathBuf>,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    worker_penalty: Option<f64>,
    #[arg(long)]
    no_depot_return: bool,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PerturbEvalArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    /// Perturbation levels: a single value (3), an inclusive range
    /// (1..10) or a comma list (1,3,5).
    #[arg(long)]
    k: String,
    /// Time units added to each perturbed entity.
    #[arg(long, default_value_t = 5)]
    delta: i64,
    /// Recompute the exact solution per level for paired gaps.
    #[arg(long)]
    oracle: bool,
    /// Pick perturbed entities by seed instead of taking the first k.
    #[arg(long)]
    selection_seed: Option<u64>,
    #[arg(long)]
    worker_penalty: Option<f64>,
    #[arg(long)]
    no_depot_return: bool,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random (policy, batch) pairs to verify.
    #[arg(long, default_value_t = 100)]
    pairs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Maximum relative error accepted between analytic and numeric.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct SelftestArgs {
    /// Reachable states swept for masking soundness.
    #[arg(long, default_value_t = 10_000)]
    states: usize,
    /// Total sampled actions checked against the masks.
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    /// Random assignment episodes checked for conservation.
    #[arg(long, default_value_t = 1_000)]
    episodes: usize,
    /// Largest episode size in the conservation sweep.
    #[arg(long, default_value_t = 50)]
    max_tasks: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Infeasible(String),
    Internal(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Internal(m) => write!(f, "internal invariant violated: {m}"),
        }
    }
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(1),
            CliError::Infeasible(_) => ExitCode::from(2),
            CliError::Internal(_) => ExitCode::from(3),
        }
    }
}

fn usage(msg: impl fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn classify_env(e: EnvError) -> CliError {
    match e {
        EnvError::DeadEnd => CliError::Infeasible("no feasible action for the current task".into()),
        EnvError::Infeasible(m) => CliError::Infeasible(m),
        EnvError::InvalidAction(m) => CliError::Internal(m),
        EnvError::Instance(e) => usage(e),
    }
}

fn classify_ppo(e: PpoError) -> CliError {
    match e {
        PpoError::Env(e) => classify_env(e),
        PpoError::Net(e) => CliError::Internal(e.to_string()),
        PpoError::Config(m) => CliError::Usage(m),
    }
}

fn classify_baseline(e: BaselineError) -> CliError {
    match e {
        BaselineError::Infeasible(m) => CliError::Infeasible(m),
        BaselineError::TooLarge(m) | BaselineError::Unsupported(m) => CliError::Usage(m),
        BaselineError::Invalid(m) => CliError::Internal(m),
    }
}

fn classify_bench(e: BenchError) -> CliError {
    match e {
        BenchError::Env(e) => classify_env(e),
        BenchError::Ppo(e) => classify_ppo(e),
        BenchError::Baseline(e) => classify_baseline(e),
        BenchError::Instance(e) => usage(e),
        BenchError::Config(m) => CliError::Usage(m),
        BenchError::Internal(m) => CliError::Internal(m),
    }
}

fn classify_checkpoint(e: CheckpointError) -> CliError {
    // Both unreadable files and malformed bytes are input problems.
    usage(e)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
        Some(p) => std::fs::write(p, text)
            .map_err(|e| usage(format!("writing {}: {e}", p.display()))),
    }
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("run config {}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance, CliError> {
    let inst = parse_instance(&read_text(path)?).map_err(usage)?;
    inst.validate().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(inst)
}

/// Reward settings: checkpoint or run-config value, then flag overrides.
fn apply_reward_overrides(
    mut reward: RewardConfig,
    worker_penalty: Option<f64>,
    no_depot_return: bool,
) -> RewardConfig {
    if let Some(p) = worker_penalty {
        reward.worker_penalty = p;
    }
    if no_depot_return {
        reward.depot_return = false;
    }
    reward
}

/// Shape-checked decode of one instance, timed around the decode only.
fn decode_instance(
    params: &PolicyParams,
    inst: &Instance,
    rcfg: RewardConfig,
    mode: DecodeMode,
    seed: u64,
) -> Result<(assignrl_core::Solution, f64), CliError> {
    let expected = NetShape::for_instance(inst.task_count(), inst.worker_count());
    if params.shape.seq_len != expected.seq_len || params.shape.actions != expected.actions {
        return Err(usage(format!(
            "policy was trained for {} sequence inputs / {} actions but the instance needs {} / {}",
            params.shape.seq_len, params.shape.actions, expected.seq_len, expected.actions
        )));
    }
    let started = Instant::now();
    let env = make_env(inst, rcfg).map_err(classify_env)?;
    let mut rng = seeds::rng(seeds::mix(seed, tags::ACTION));
    let record =
        collect_episode(env.as_ref(), params, 1.0, 1.0, mode, &mut rng).map_err(classify_ppo)?;
    let seconds = started.elapsed().as_secs_f64();
    let sol = solution_from_episode(inst, &record, rcfg).map_err(classify_bench)?;
    Ok((sol, seconds))
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let cfg = load_run_config(args.config.as_deref())?;
    let inst = generate_instance(args.kind, args.n, args.seed, &cfg.gen).map_err(usage)?;
    write_output(args.out.as_deref(), &serialize_instance(&inst))
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = load_run_config(args.config.as_deref())?;
    if let Some(e) = args.episodes {
        cfg.train.episodes = e;
    }
    if args.clear_buffer {
        cfg.train.clear_buffer = true;
    }
    if let Some(g) = args.stop_gap {
        cfg.train.stop_gap = Some(g);
    }
    let dist = make_distribution(args.kind, args.n, args.seed, &cfg.gen).map_err(usage)?;
    let sample0 = dist.sample(0);
    let reward = apply_reward_overrides(
        cfg.reward.unwrap_or_else(|| RewardConfig::default_for(&sample0)),
        args.worker_penalty,
        args.no_depot_return,
    );

    // Early stopping compares against the exact solver on the held-out
    // evaluation indices, in the same units as the evaluation metric
    // (negated episode reward).
    let refs: Option<Vec<f64>> = match cfg.train.stop_gap {
        None => None,
        Some(_) => {
            let mut refs = Vec::with_capacity(cfg.train.eval_seeds.len());
            for &idx in &cfg.train.eval_seeds {
                let inst = dist.sample(idx);
                let sol = exact_solution(&inst, reward.worker_penalty).map_err(|e| {
                    usage(format!("--stop-gap needs exact references, but: {e}"))
                })?;
                let metric = match inst {
                    Instance::Bin(_) => {
                        reward.worker_penalty * sol.workers_used as f64 - sol.total_cost
                    }
                    _ => sol.objective(reward.worker_penalty),
                };
                refs.push(metric);
            }
            Some(refs)
        }
    };

    let train_seed = args.train_seed.unwrap_or(args.seed);
    let started = Instant::now();
    let result =
        train(dist.as_ref(), reward, &cfg.train, train_seed, refs.as_deref()).map_err(classify_ppo)?;
    let elapsed = started.elapsed();

    let meta = CheckpointMeta {
        family: args.kind,
        task_count: sample0.task_count(),
        worker_count: sample0.worker_count(),
        base_seed: args.seed,
        train_seed,
        gen: cfg.gen.clone(),
        reward,
        train: cfg.train.clone(),
        shape: result.params.shape,
    };
    let ckpt = Checkpoint::new(meta, &result.params);
    save_checkpoint(&args.out, &ckpt).map_err(classify_checkpoint)?;
    let hash = sha256_hex(
        &assignrl_core::checkpoint::encode_checkpoint(&ckpt).map_err(classify_checkpoint)?,
    );

    for ev in &result.evals {
        println!("eval after episode {}: mean metric {:.6}", ev.episode, ev.mean_metric);
    }
    println!(
        "trained {} n={} seed={}: {} episodes, best eval {:.6} after episode {}",
        args.kind, args.n, args.seed, result.episodes_run, result.best_metric, result.best_episode
    );
    println!("checkpoint {} sha256 {hash}", args.out.display());
    eprintln!("wall clock: {:.1}s", elapsed.as_secs_f64());
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&args.policy).map_err(classify_checkpoint)?;
    let inst = load_instance(&args.instance)?;
    let reward =
        apply_reward_overrides(ckpt.meta.reward, args.worker_penalty, args.no_depot_return);
    let mode = if args.sample { DecodeMode::Sample } else { DecodeMode::Greedy };
    let params = ckpt.params();
    let (sol, seconds) = decode_instance(&params, &inst, reward, mode, args.seed)?;
    let report = serde_json::json!({
        "instance": args.instance.display().to_string(),
        "kind": inst.kind().to_string(),
        "tasks": inst.task_count(),
        "workers": inst.worker_count(),
        "mode": if args.sample { "sample" } else { "greedy" },
        "total_cost": sol.total_cost,
        "workers_used": sol.workers_used,
        "worker_penalty": reward.worker_penalty,
        "objective": sol.objective(reward.worker_penalty),
        "solve_time_seconds": seconds,
        "solution": sol,
    });
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Internal(format!("report serialization: {e}")))?;
    write_output(args.report.as_deref(), &text)
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let cfg = load_run_config(args.config.as_deref())?;
    if args.sizes.is_empty() {
        return Err(usage("--sizes needs at least one size"));
    }
    let mut policies = BTreeMap::new();
    let mut hashes = BTreeMap::new();
    if args.methods.contains(&Method::Rl) {
        let dir = args
            .policies
            .as_deref()
            .ok_or_else(|| usage("method rl needs --policies <dir>"))?;
        for &size in &args.sizes {
            let name = format!("{}{}", args.kind, size);
            let path = dir.join(format!("{name}.ckpt"));
            if !path.exists() {
                return Err(usage(format!(
                    "method rl needs a checkpoint for size {size}: {} not found",
                    path.display()
                )));
            }
            let ckpt = load_checkpoint(&path).map_err(classify_checkpoint)?;
            if ckpt.meta.family != args.kind || ckpt.meta.task_count != size {
                return Err(usage(format!(
                    "{} was trained on {} n={}, not {} n={size}",
                    path.display(),
                    ckpt.meta.family,
                    ckpt.meta.task_count,
                    args.kind
                )));
            }
            hashes.insert(
                name,
                sha256_hex(
                    &assignrl_core::checkpoint::encode_checkpoint(&ckpt)
                        .map_err(classify_checkpoint)?,
                ),
            );
            policies.insert(size, ckpt.params());
        }
    }
    let worker_penalty =
        args.worker_penalty.or(cfg.reward.map(|r| r.worker_penalty));
    let depot_return = !args.no_depot_return && cfg.reward.map_or(true, |r| r.depot_return);
    let task = BenchTask {
        kind: args.kind,
        sizes: &args.sizes,
        seeds: args.seeds,
        methods: &args.methods,
        gen: cfg.gen.clone(),
        worker_penalty,
        depot_return,
    };
    let report = run_benchmark(&task, &policies, hashes).map_err(classify_bench)?;
    write_output(args.out.as_deref(), &emit_report(&report, args.format))
}

/// Parse `3`, `1..10` (inclusive) or `1,3,5` into perturbation levels.
fn parse_k_levels(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = || usage(format!("cannot parse --k {spec:?}: expected N, A..B or a comma list"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(usage(format!("--k range {a}..{b} is empty")));
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|part| part.trim().parse().map_err(|_| bad()))
        .collect()
}

fn cmd_perturb_eval(args: PerturbEvalArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&args.policy).map_err(classify_checkpoint)?;
    let inst = load_instance(&args.instance)?;
    let reward =
        apply_reward_overrides(ckpt.meta.reward, args.worker_penalty, args.no_depot_return);
    let ks = parse_k_levels(&args.k)?;
    let params = ckpt.params();
    let outcomes = perturbation_sweep(
        &params,
        &inst,
        reward,
        &ks,
        args.delta,
        args.selection_seed,
        args.oracle,
        true,
    )
    .map_err(classify_bench)?;
    let hash = sha256_hex(
        &assignrl_core::checkpoint::encode_checkpoint(&ckpt).map_err(classify_checkpoint)?,
    );
    let stem = args
        .policy
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "policy".into());
    let report = sweep_report(
        inst.kind(),
        &outcomes,
        reward.worker_penalty,
        BTreeMap::from([(stem, hash)]),
    );
    write_output(args.out.as_deref(), &emit_report(&report, args.format))
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    if args.pairs == 0 {
        return Err(usage("--pairs must be positive"));
    }
    let report = run_gradcheck_suite(args.pairs, args.seed, args.tolerance)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    println!(
        "gradient check: {} comparisons over {} pairs, {} skipped at kinks, max relative error {:.3e} (tolerance {:.0e})",
        report.checked, args.pairs, report.skipped, report.max_rel_err, report.tolerance
    );
    if report.pass() {
        Ok(())
    } else {
        Err(CliError::Internal(format!(
            "finite differences disagree with analytic gradients ({:.3e} >= {:.0e})",
            report.max_rel_err, report.tolerance
        )))
    }
}

fn classify_selftest(e: SelftestError) -> CliError {
    match e {
        SelftestError::Violation(m) => CliError::Internal(m),
        SelftestError::Config(m) => CliError::Usage(m),
        SelftestError::Env(e) => classify_env(e),
        SelftestError::Ppo(e) => classify_ppo(e),
        SelftestError::Nn(e) => CliError::Internal(e.to_string()),
        SelftestError::Instance(e) => CliError::Internal(e.to_string()),
    }
}

fn cmd_selftest(args: SelftestArgs) -> Result<(), CliError> {
    let mask = mask_soundness(args.states, args.draws, args.seed).map_err(classify_selftest)?;
    println!(
        "mask soundness: {} states, {} sampled actions, max probability-sum error {:.3e}",
        mask.states, mask.draws, mask.max_sum_err
    );
    let cons = env_conservation(args.episodes, args.max_tasks, args.seed)
        .map_err(classify_selftest)?;
    println!(
        "environment conservation: {} episodes, {} steps, max reward/cost drift {:.3e}",
        cons.episodes, cons.steps, cons.max_reward_drift
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Bench(args) => cmd_bench(args),
        Command::PerturbEval(args) => cmd_perturb_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Selftest(args) => cmd_selftest(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
