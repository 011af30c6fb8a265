//! Cross-product sweeps over action counts and surrogate objectives on the
//! discrete sparse bandit.

use crate::config::{ExperimentConfig, ExperimentId, PolicyKind, SurrogateName};
use crate::experiments::{execute, run_pool};
use crate::wilson_interval;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub actions: usize,
    pub surrogate: SurrogateName,
    pub policy: PolicyKind,
    pub converged: usize,
    pub total: usize,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Run every (action count, surrogate) cell with `config.runs` seeded runs
/// each. Wilson 95% intervals accompany each fraction.
pub fn run_sweep(
    config: &ExperimentConfig,
    actions: &[usize],
    surrogates: &[SurrogateName],
) -> anyhow::Result<Vec<SweepCell>> {
    if actions.is_empty() || surrogates.is_empty() {
        anyhow::bail!("sweep dimensions must be nonempty");
    }
    let cells: Vec<(usize, SurrogateName)> = actions
        .iter()
        .flat_map(|&n| surrogates.iter().map(move |&s| (n, s)))
        .collect();
    // Parallelism lives inside each cell's execute(); cells run serially so
    // the pool is shared sensibly.
    let mut out = Vec::with_capacity(cells.len());
    for (n, surrogate) in cells {
        let cell_config = ExperimentConfig {
            experiment: ExperimentId::Failure2,
            policy: PolicyKind::Softmax,
            surrogate,
            actions: n,
            ..config.clone()
        };
        let outcome = run_pool(config.jobs, || execute(&cell_config))?;
        let (ci_low, ci_high) =
            wilson_interval(outcome.aggregate.converged, outcome.aggregate.runs);
        out.push(SweepCell {
            actions: n,
            surrogate,
            policy: PolicyKind::Softmax,
            converged: outcome.aggregate.converged,
            total: outcome.aggregate.runs,
            fraction: outcome.aggregate.convergence_fraction,
            ci_low,
            ci_high,
        });
    }
    Ok(out)
}

pub fn parse_usize_list(text: &str) -> anyhow::Result<Vec<usize>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| anyhow::anyhow!("bad list entry {s:?}: {e}"))
        })
        .collect()
}

pub fn parse_surrogate_list(text: &str) -> anyhow::Result<Vec<SurrogateName>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            SurrogateName::parse(s.trim())
                .ok_or_else(|| anyhow::anyhow!("unknown surrogate {s:?}"))
        })
        .collect()
}
