//! CSV and JSON output. Every CSV starts with a comment header carrying the
//! artifact version, the master seed, and the resolved config hash, and all
//! values format deterministically, so re-running with the same manifest
//! reproduces byte-identical files.

use crate::config::{config_hash, ExperimentConfig, RunManifest};
use crate::diagnose::DiagRow;
use crate::experiments::{AggregateSummary, RunSummary};
use crate::sweep::SweepCell;
use anyhow::Context;
use ppo_lab::mw::{RegretCheck, RegretLedger};
use ppo_lab::trainer::IterationRecord;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn csv_header(config: &ExperimentConfig) -> String {
    format!(
        "# ppo-lab v{ARTIFACT_VERSION}\n# master_seed: {}\n# config_hash: {}\n",
        config.seed,
        config_hash(config)
    )
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_iteration_csv(
    path: &Path,
    config: &ExperimentConfig,
    records: &[IterationRecord],
) -> anyhow::Result<()> {
    let mut text = csv_header(config);
    text.push_str("iter,mean_reward,probe_reward,kl_fwd,kl_rev,ratio_min,ratio_max,clip_inactive_frac\n");
    for r in records {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            r.mean_reward,
            r.probe_reward,
            r.kl_forward,
            r.kl_reverse,
            r.ratio_min,
            r.ratio_max,
            fmt_opt(r.clip_inactive_frac)
        )?;
    }
    write_file(path, &text)
}

pub fn write_sweep_csv(
    path: &Path,
    config: &ExperimentConfig,
    cells: &[SweepCell],
) -> anyhow::Result<()> {
    let mut text = csv_header(config);
    text.push_str("n,surrogate,policy,converged,total,fraction,ci_low,ci_high\n");
    for c in cells {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            c.actions,
            c.surrogate.as_str(),
            c.policy.as_str(),
            c.converged,
            c.total,
            c.fraction,
            c.ci_low,
            c.ci_high
        )?;
    }
    write_file(path, &text)
}

pub fn write_ledger_csv(
    path: &Path,
    config: &ExperimentConfig,
    ledger: &RegretLedger,
    prefix_checks: &[RegretCheck],
) -> anyhow::Result<()> {
    let mut text = csv_header(config);
    text.push_str("k,eta,lhs,rhs,holds\n");
    for (k, check) in prefix_checks.iter().enumerate() {
        writeln!(
            text,
            "{},{},{},{},{}",
            k + 1,
            ledger.entries[k].eta,
            check.lhs,
            check.rhs_general,
            check.holds
        )?;
    }
    write_file(path, &text)
}

pub fn write_diagnose_csv(
    path: &Path,
    config: &ExperimentConfig,
    rows: &[DiagRow],
) -> anyhow::Result<()> {
    let mut text = csv_header(config);
    text.push_str("action,reward,ratio,score_norm,weighting,grad_contrib\n");
    for r in rows {
        writeln!(
            text,
            "{},{},{},{},{},{}",
            r.action, r.reward, r.ratio, r.score_norm, r.weighting, r.grad_contrib
        )?;
    }
    write_file(path, &text)
}

pub fn write_landscape_csv(
    path: &Path,
    config: &ExperimentConfig,
    probe: &[(f64, f64)],
) -> anyhow::Result<()> {
    let mut text = csv_header(config);
    text.push_str("action,mean_reward\n");
    for (a, r) in probe {
        writeln!(text, "{a},{r}")?;
    }
    write_file(path, &text)
}

#[derive(Serialize)]
pub struct SummaryDocument<'a> {
    pub schema_version: u32,
    pub artifact_version: &'static str,
    pub experiment: &'a str,
    pub config_hash: String,
    pub aggregate: &'a AggregateSummary,
    pub per_run: &'a [RunSummary],
}

pub fn write_summary_json(
    path: &Path,
    config: &ExperimentConfig,
    aggregate: &AggregateSummary,
    per_run: &[RunSummary],
) -> anyhow::Result<()> {
    let doc = SummaryDocument {
        schema_version: 1,
        artifact_version: ARTIFACT_VERSION,
        experiment: config.experiment.as_str(),
        config_hash: config_hash(config),
        aggregate,
        per_run,
    };
    write_file(path, &serde_json::to_string_pretty(&doc)?)
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> anyhow::Result<()> {
    write_file(path, &serde_json::to_string_pretty(manifest)?)
}

pub fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating output directory {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
