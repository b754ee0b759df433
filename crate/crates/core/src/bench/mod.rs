//! Benchmark harness: decode pretrained policies next to the exact
//! and greedy baselines, perturb instances for re-inference studies,
//! and render the results as CSV, Markdown, or JSON lines.
//!
//! Gaps are relative to the exact solver on the penalized objective
//! (`cost + worker_penalty * workers`) for assignment and routing, and
//! on packed value for bin packing (where larger is better, so the gap
//! is `(exact - method) / exact`). Positive gaps always mean worse
//! than exact.

mod run;

pub use run::{
    evaluate_pretrained, perturb_instance, perturbation_sweep, run_benchmark, solution_from_episode,
    sweep_report, BenchTask, PerturbOutcome,
};

use crate::baselines::BaselineError;
use crate::envs::EnvError;
use crate::instances::{InstanceError, InstanceKind};
use crate::ppo::PpoError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("bench config: {0}")]
    Config(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

/// Solver identity of one report row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rl,
    Exact,
    Greedy,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rl => "rl",
            Method::Exact => "exact",
            Method::Greedy => "greedy",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rl" => Ok(Method::Rl),
            "exact" => Ok(Method::Exact),
            "greedy" => Ok(Method::Greedy),
            other => Err(format!("unknown method '{other}' (expected rl, exact or greedy)")),
        }
    }
}

/// How to perturb an instance's time units without retraining: bump
/// `k` task efforts (item weights, customer demands) by `delta`,
/// clamping into `[1, max capacity]`. With no selection seed the
/// first `k` tasks are touched, so growing `k` extends the same
/// cumulative perturbation; a seed instead picks `k` distinct tasks
/// reproducibly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSpec {
    pub k: usize,
    pub delta: i64,
    pub selection_seed: Option<u64>,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec { k: 1, delta: 5, selection_seed: None }
    }
}

/// One benchmark result. `cost` is the raw family objective
/// (assignment cost, packed value, travelled distance); it is absent
/// when the method was skipped, with the reason in `note`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub kind: InstanceKind,
    pub size: usize,
    pub method: Method,
    pub cost: Option<f64>,
    pub workers_used: usize,
    pub solve_time_seconds: f64,
    pub feasible: bool,
    pub gap_vs_exact: Option<f64>,
    pub note: String,
}

/// A batch of rows plus the checkpoint fingerprints that produced the
/// RL rows, keyed by a caller-chosen label.
#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub policy_hashes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    JsonLines,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "jsonl" | "json-lines" => Ok(ReportFormat::JsonLines),
            other => Err(format!("unknown format '{other}' (expected csv, markdown or jsonl)")),
        }
    }
}

const COLUMNS: [&str; 10] = [
    "instance",
    "kind",
    "size",
    "method",
    "cost",
    "workers_used",
    "solve_time_seconds",
    "feasible",
    "gap_vs_exact",
    "note",
];

/// Render a report. Column order is fixed; an empty report renders
/// headers only. Markdown additionally lists the policy fingerprints.
pub fn emit_report(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => emit_csv(report),
        ReportFormat::Markdown => emit_markdown(report),
        ReportFormat::JsonLines => emit_json_lines(report),
    }
}

fn emit_csv(report: &BenchReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for r in &report.rows {
        w.write_record([
            r.instance.clone(),
            r.kind.to_string(),
            r.size.to_string(),
            r.method.to_string(),
            r.cost.map(|c| c.to_string()).unwrap_or_default(),
            r.workers_used.to_string(),
            format!("{:.6}", r.solve_time_seconds),
            r.feasible.to_string(),
            r.gap_vs_exact.map(|g| g.to_string()).unwrap_or_default(),
            r.note.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 rows")
}

fn emit_markdown(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", COLUMNS.join(" | ")));
    out.push_str(&format!("|{}\n", " --- |".repeat(COLUMNS.len())));
    for r in &report.rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {:.6} | {} | {} | {} |\n",
            r.instance,
            r.kind,
            r.size,
            r.method,
            r.cost.map(|c| format!("{c:.3}")).unwrap_or_default(),
            r.workers_used,
            r.solve_time_seconds,
            r.feasible,
            r.gap_vs_exact.map(|g| format!("{g:.4}")).unwrap_or_default(),
            r.note,
        ));
    }
    if !report.policy_hashes.is_empty() {
        out.push_str("\nPolicy checkpoints (sha256):\n");
        for (label, hash) in &report.policy_hashes {
            out.push_str(&format!("- {label}: `{hash}`\n"));
        }
    }
    out
}

fn emit_json_lines(report: &BenchReport) -> String {
    let mut out = String::new();
    for r in &report.rows {
        out.push_str(&serde_json::to_string(r).expect("row serializes"));
        out.push('\n');
    }
    out
}
