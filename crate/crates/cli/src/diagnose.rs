//! Single-iteration deep dive: after a few warmup iterations, run one PPO
//! iteration and dump per-sample diagnostics — action, reward, ratio, score
//! magnitude, the per-example weighting, and the sample's contribution to
//! the aggregated gradient.

use crate::config::ExperimentConfig;
use crate::experiments::{resolve_run, surrogate_spec};
use anyhow::Context;
use ppo_lab::dist::Action;
use ppo_lab::rng::Rng;
use ppo_lab::surrogate::{gradient_weight, sample_weighting};
use ppo_lab::trainer::{ppo_iteration, ppo_iteration_detailed, RewardScaler};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct DiagRow {
    pub action: f64,
    pub reward: f64,
    pub ratio: f64,
    pub score_norm: f64,
    pub weighting: f64,
    pub grad_contrib: f64,
}

pub struct DiagnoseOutcome {
    pub rows: Vec<DiagRow>,
    pub density_grid: Option<Vec<f64>>,
    pub probe_reward: f64,
}

pub fn run_diagnose(config: &ExperimentConfig, warmup: usize) -> anyhow::Result<DiagnoseOutcome> {
    let resolved = resolve_run(config, 0)?;
    resolved
        .env
        .bounds()
        .context("diagnose needs a continuous bandit environment")?;
    let spec = surrogate_spec(config)?;

    let mut params = resolved.init.clone();
    let mut rng = Rng::new(resolved.train.seed);
    let mut scaler = RewardScaler::new(
        resolved.train.reward_scaling,
        resolved.train.gae.map(|g| g.gamma).unwrap_or(0.99),
    );
    for i in 0..warmup {
        let record = ppo_iteration(
            &resolved.env,
            &mut params,
            &resolved.train,
            &mut rng,
            &mut scaler,
            i,
        )?;
        if record.diverged {
            anyhow::bail!("run diverged during warmup iteration {i}");
        }
    }
    let (record, batch, _snapshot) = ppo_iteration_detailed(
        &resolved.env,
        &mut params,
        &resolved.train,
        &mut rng,
        &mut scaler,
        warmup,
    )?;

    let dist = params.realize()?;
    let mut rows = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let a = batch.actions[i];
        let log_ratio = dist.log_prob(a)? - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = batch.advantages[i];
        let score = params.score_raw(a)?;
        let score_norm = score.iter().map(|s| s * s).sum::<f64>().sqrt();
        // Zero-advantage samples have no defined relative weighting.
        let weighting = sample_weighting(&spec, ratio, adv).unwrap_or(f64::NAN);
        let grad_contrib = gradient_weight(&spec, ratio, adv)?.abs() * score_norm;
        rows.push(DiagRow {
            action: match a {
                Action::Continuous(x) => x,
                Action::Discrete(i) => i as f64,
            },
            reward: batch.rewards[i],
            ratio,
            score_norm,
            weighting,
            grad_contrib,
        });
    }
    Ok(DiagnoseOutcome {
        rows,
        density_grid: record.density_grid.clone(),
        probe_reward: record.probe_reward,
    })
}
