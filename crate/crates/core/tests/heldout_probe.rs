use assignrl_core::baselines::{exact_solution, greedy_solution};
use assignrl_core::envs::RewardConfig;
use assignrl_core::instances::{make_distribution, GenConfig, InstanceKind};

#[test]
fn heldout_greedy_vs_exact() {
    let dist = make_distribution(InstanceKind::Ap, 10, 7, &GenConfig::default()).unwrap();
    let rcfg = RewardConfig::default_for(&dist.sample(0));
    let lambda = rcfg.worker_penalty;
    let mut gaps = Vec::new();
    for i in (0..20).map(|i| 2_000_000 + i) {
        let inst = dist.sample(i);
        let ex = exact_solution(&inst, lambda).unwrap();
        let gr = greedy_solution(&inst, lambda).unwrap();
        let (eo, go) = (ex.objective(lambda), gr.objective(lambda));
        let gap = (go - eo) / eo;
        gaps.push(gap);
        eprintln!(
            "seed {i}: exact {eo:.0} ({} w) greedy {go:.0} ({} w) gap {:.1}%",
            ex.workers_used,
            gr.workers_used,
            gap * 100.0
        );
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    eprintln!("mean greedy gap: {:.2}%", mean * 100.0);
}
