//! Experiment bundles: each experiment id resolves to an environment, a
//! policy initialization, and a training configuration; runs execute in a
//! work pool with seeds pre-derived per run index, so results are
//! independent of scheduling.

use crate::config::{BaselineName, ExperimentConfig, ExperimentId, PolicyKind, SurrogateName};
use anyhow::{bail, Context};
use ppo_lab::dist::Dist;
use ppo_lab::envs::{Bandit, DiscreteSparseBandit, DoublePeakBandit, SinglePeakBandit};
use ppo_lab::policy::{InitKind, PolicyParams};
use ppo_lab::rng::derive_stream;
use ppo_lab::surrogate::SurrogateSpec;
use ppo_lab::trainer::{
    optimal_action_probability, train, Baseline, Optimizer, RewardScaling, TrainConfig, TrainRun,
};
use serde::Serialize;

/// Optimizer per policy family.
///
/// Gaussian scores are heavy-tailed at small sigma and need AMSGrad with
/// fast second-moment tracking to keep single steps bounded; the Beta
/// policy's softplus chain factor (~0.018 at the near-uniform init) starves
/// plain SGD, so it gets AMSGrad with the slower horizon that avoids
/// max-moment inflation. Softmax logits are bounded and well-scaled, and
/// plain SGD keeps their growth proportional to advantages, which is what
/// separates the advantage-proportional KL updates from the cap-limited
/// clipped ones on large action spaces.
fn optimizer_for(policy: PolicyKind) -> Optimizer {
    match policy {
        PolicyKind::Gaussian => Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.97,
            eps: 1e-5,
            amsgrad: true,
        },
        PolicyKind::Beta => Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-5,
            amsgrad: true,
        },
        PolicyKind::Softmax | PolicyKind::Discretized => Optimizer::Sgd,
    }
}

pub fn surrogate_spec(config: &ExperimentConfig) -> anyhow::Result<SurrogateSpec> {
    Ok(match config.surrogate {
        SurrogateName::Clip => SurrogateSpec::clip(config.epsilon)?,
        SurrogateName::ForwardKl => SurrogateSpec::forward_kl(config.beta)?,
        SurrogateName::ReverseKl => SurrogateSpec::reverse_kl(config.beta)?,
        SurrogateName::Unregularized => SurrogateSpec::Unregularized,
    })
}

/// Everything one seeded run needs.
pub struct ResolvedRun {
    pub run_index: usize,
    pub seed: u64,
    pub env: Bandit,
    pub init: PolicyParams,
    pub train: TrainConfig,
}

pub fn resolve_run(config: &ExperimentConfig, run_index: usize) -> anyhow::Result<ResolvedRun> {
    let run_seed = derive_stream(config.seed, run_index as u64);
    let env = match config.experiment {
        ExperimentId::Failure1 | ExperimentId::ScalingAblation => {
            if config.policy == PolicyKind::Discretized {
                Bandit::DiscreteSparse(DiscreteSparseBandit::discretized_single_peak())
            } else {
                Bandit::SinglePeak(SinglePeakBandit::standard())
            }
        }
        ExperimentId::Failure1Wide => Bandit::SinglePeak(SinglePeakBandit::wide()),
        ExperimentId::Failure2 | ExperimentId::ActionSweep | ExperimentId::LrAblation => {
            Bandit::DiscreteSparse(DiscreteSparseBandit::new(config.actions, run_seed)?)
        }
        ExperimentId::Failure3 => Bandit::DoublePeak(DoublePeakBandit::standard()),
    };
    let init = match (config.policy, &env) {
        (PolicyKind::Gaussian, _) => PolicyParams::init(InitKind::GaussianStandard)?,
        (PolicyKind::Beta, env) => {
            let (lo, hi) = env
                .bounds()
                .context("beta policy needs a continuous environment")?;
            PolicyParams::init(InitKind::BetaNearUniform { lo, hi })?
        }
        (PolicyKind::Softmax | PolicyKind::Discretized, env) => {
            let n = env
                .n_actions()
                .context("softmax policy needs a discrete environment")?;
            PolicyParams::init(InitKind::SoftmaxUniform { n_actions: n })?
        }
    };
    let train = TrainConfig {
        iterations: config.iterations,
        timesteps_per_iter: config.timesteps,
        minibatch_size: config.minibatch,
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        optimizer: optimizer_for(config.policy),
        surrogate: surrogate_spec(config)?,
        advantage_normalization: config.advantage_normalization,
        reward_scaling: if config.return_std_scaling {
            RewardScaling::ReturnStd
        } else if config.reward_scale == 1.0 {
            RewardScaling::None
        } else {
            RewardScaling::Constant {
                factor: config.reward_scale,
            }
        },
        baseline: match config.baseline {
            BaselineName::BatchMean => Baseline::BatchMean,
            BaselineName::Zero => Baseline::Zero,
        },
        gae: None,
        seed: derive_stream(run_seed, 1),
        density_grid_points: config.density_points,
    };
    Ok(ResolvedRun {
        run_index,
        seed: run_seed,
        env,
        init,
        train,
    })
}

/// Per-run outcome summary, with the convergence verdicts used by the
/// aggregate statistics.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run_index: usize,
    pub seed: u64,
    pub diverged: bool,
    pub collapsed: bool,
    pub converged: bool,
    pub final_probe_reward: f64,
    /// Mean probe reward over the last fifth of the run (plus one).
    pub late_window_probe: f64,
    pub final_mean_reward: f64,
    /// Probability on the optimal action (discrete runs).
    pub optimal_action_probability: Option<f64>,
    /// Final Gaussian mean / Beta mode in action units.
    pub final_policy_location: Option<f64>,
}

/// Collapse: probe reward exceeds 0.8 at some iteration, then falls below
/// 0.4 and stays below for at least five consecutive iterations.
pub fn collapsed(probes: &[f64]) -> bool {
    let mut seen_high = false;
    let mut low_run = 0;
    for &p in probes {
        if p > 0.8 {
            seen_high = true;
            low_run = 0;
        } else if p < 0.4 {
            if seen_high {
                low_run += 1;
                if low_run >= 5 {
                    return true;
                }
            }
        } else {
            low_run = 0;
        }
    }
    false
}

/// Mean probe reward over iterations `floor(0.8 K) .. K`.
pub fn late_window_probe(run: &TrainRun, iterations: usize) -> f64 {
    let start = (iterations as f64 * 0.8).floor() as usize;
    let window: Vec<f64> = run
        .records
        .iter()
        .skip(start.saturating_sub(1))
        .map(|r| r.probe_reward)
        .collect();
    if window.is_empty() || run.records.len() < iterations {
        // Halted runs never reach the window.
        return 0.0;
    }
    window.iter().sum::<f64>() / window.len() as f64
}

pub fn summarize(resolved: &ResolvedRun, run: &TrainRun) -> anyhow::Result<RunSummary> {
    let probes: Vec<f64> = run.records.iter().map(|r| r.probe_reward).collect();
    let last = run.records.last();
    let final_probe = last.map(|r| r.probe_reward).unwrap_or(f64::NAN);
    let final_mean = last.map(|r| r.mean_reward).unwrap_or(f64::NAN);
    let late = late_window_probe(run, resolved.train.iterations);

    let optimal_prob = match &resolved.env {
        Bandit::DiscreteSparse(_) if run.diverged_at.is_none() => {
            Some(optimal_action_probability(run, &resolved.env)?)
        }
        _ => None,
    };
    let location = last.and_then(|r| match r.policy.realize() {
        Ok(Dist::Gaussian(g)) => Some(g.mu()),
        Ok(Dist::Beta(b)) => Some(b.mode()),
        _ => None,
    });
    let converged = match &resolved.env {
        Bandit::DiscreteSparse(_) => optimal_prob.map(|p| p >= 0.95).unwrap_or(false),
        Bandit::SinglePeak(_) => late >= 0.7,
        Bandit::DoublePeak(env) => {
            // Optimal peak at -2 within half an action unit.
            let _ = env;
            location.map(|x| (x + 2.0).abs() <= 0.5).unwrap_or(false)
        }
    };
    Ok(RunSummary {
        run_index: resolved.run_index,
        seed: resolved.seed,
        diverged: run.diverged_at.is_some(),
        collapsed: collapsed(&probes),
        converged,
        final_probe_reward: final_probe,
        late_window_probe: late,
        final_mean_reward: final_mean,
        optimal_action_probability: optimal_prob,
        final_policy_location: location,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateSummary {
    pub runs: usize,
    pub converged: usize,
    pub convergence_fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub collapsed: usize,
    pub collapse_fraction: f64,
    pub diverged: usize,
    pub mean_final_reward: f64,
    pub std_final_reward: f64,
}

pub fn aggregate(summaries: &[RunSummary]) -> AggregateSummary {
    let n = summaries.len();
    let converged = summaries.iter().filter(|s| s.converged).count();
    let collapsed = summaries.iter().filter(|s| s.collapsed).count();
    let diverged = summaries.iter().filter(|s| s.diverged).count();
    let finals: Vec<f64> = summaries
        .iter()
        .map(|s| s.final_mean_reward)
        .filter(|x| x.is_finite())
        .collect();
    let mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
    let var = finals
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / finals.len().max(1) as f64;
    let (ci_low, ci_high) = crate::wilson_interval(converged, n);
    AggregateSummary {
        runs: n,
        converged,
        convergence_fraction: converged as f64 / n.max(1) as f64,
        ci_low,
        ci_high,
        collapsed,
        collapse_fraction: collapsed as f64 / n.max(1) as f64,
        diverged,
        mean_final_reward: mean,
        std_final_reward: var.sqrt(),
    }
}

pub struct ExperimentOutcome {
    pub per_run: Vec<(ResolvedRun, TrainRun, RunSummary)>,
    pub aggregate: AggregateSummary,
}

/// Execute all runs of the experiment (in parallel when a pool is
/// available), gathering results by run index.
pub fn execute(config: &ExperimentConfig) -> anyhow::Result<ExperimentOutcome> {
    config.validate()?;
    if matches!(config.experiment, ExperimentId::ActionSweep) {
        bail!("action_sweep is driven by the sweep command");
    }
    let indices: Vec<usize> = (0..config.runs).collect();
    let results: Vec<anyhow::Result<(ResolvedRun, TrainRun, RunSummary)>> =
        run_pool(config.jobs, || {
            use rayon::prelude::*;
            indices
                .par_iter()
                .map(|&i| {
                    let resolved = resolve_run(config, i)?;
                    let run = train(&resolved.env, &resolved.init, &resolved.train)?;
                    let summary = summarize(&resolved, &run)?;
                    Ok((resolved, run, summary))
                })
                .collect()
        });
    let mut per_run = Vec::with_capacity(results.len());
    for r in results {
        per_run.push(r?);
    }
    per_run.sort_by_key(|(r, _, _)| r.run_index);
    let summaries: Vec<RunSummary> = per_run.iter().map(|(_, _, s)| s.clone()).collect();
    Ok(ExperimentOutcome {
        aggregate: aggregate(&summaries),
        per_run,
    })
}

/// Run a closure inside a rayon pool of the requested width.
pub fn run_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        _ => f(),
    }
}
