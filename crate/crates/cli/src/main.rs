//! `ppo-lab`: run the bandit experiments, sweeps, gradient checks, regret
//! checks, and landscape probes from the command line.
//!
//! Exit codes: 0 success, 1 assertion failure (gradient-check exceedance or
//! a violated exact-mode regret bound), 2 configuration or I/O error.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ppo_lab::envs::{Bandit, DiscreteSparseBandit, DoublePeakBandit, SinglePeakBandit};
use ppo_lab_cli::config::{
    unix_now, ExperimentConfig, ExperimentId, ManifestRun, PolicyKind, RunManifest, SurrogateName,
};
use ppo_lab_cli::diagnose::run_diagnose;
use ppo_lab_cli::experiments::{execute, run_pool};
use ppo_lab_cli::gradcheck::{run_gradcheck, GradcheckArgs};
use ppo_lab_cli::output::{self, ARTIFACT_VERSION};
use ppo_lab_cli::regret::{mode_from_str, regret_verdict, run_regret, RegretMode};
use ppo_lab_cli::sweep::{parse_surrogate_list, parse_usize_list, run_sweep};
use ppo_lab_cli::{config::config_hash, svg};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ppo-lab", version, about = "Bandit-scale PPO experiment lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat JSON config file; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed recorded in every output file header.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeded runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Also emit SVG plots next to the CSVs.
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment bundle across seeded runs.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        experiment: Option<ExperimentArg>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Surrogate objective: clip | fkl | rkl | none.
        #[arg(long)]
        surrogate: Option<String>,
        /// Discrete action count.
        #[arg(long)]
        actions: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Cross-product sweep over action counts and surrogates.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated action counts, e.g. 10,20,...,100.
        #[arg(long, default_value = "10,20,30,40,50,60,70,80,90,100")]
        actions: String,
        /// Comma-separated surrogates, e.g. clip,fkl,rkl.
        #[arg(long, default_value = "clip,fkl,rkl")]
        surrogates: String,
    },
    /// Finite-difference verification of all surrogate gradients.
    Gradcheck {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Randomized configurations per (surrogate, family) cell.
        #[arg(long, default_value_t = 100)]
        configs: usize,
    },
    /// Regret-bound ledgers on the discrete bandit.
    Regret {
        #[command(flatten)]
        common: CommonArgs,
        /// exact (bound asserted) or ppo (alpha reported).
        #[arg(long, default_value = "exact")]
        mode: String,
        #[arg(long, default_value_t = 50)]
        actions: usize,
        /// Iterations K.
        #[arg(long, default_value_t = 200)]
        k: usize,
        /// Multiplicative-weights step size (must satisfy eta < 1/rho).
        #[arg(long, default_value_t = 1.0 / 3.0)]
        eta: f64,
    },
    /// One PPO iteration with a per-sample dump.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        experiment: Option<ExperimentArg>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        surrogate: Option<String>,
        /// Warmup iterations before the diagnosed one.
        #[arg(long, default_value_t = 5)]
        warmup: usize,
    },
    /// Export an environment's mean-reward landscape.
    Landscape {
        #[command(flatten)]
        common: CommonArgs,
        /// single_peak | single_peak_wide | double_peak | discrete
        #[arg(long, default_value = "single_peak")]
        env: String,
        #[arg(long, default_value_t = 301)]
        points: usize,
        /// Action count for the discrete environment.
        #[arg(long, default_value_t = 100)]
        actions: usize,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ExperimentArg {
    Failure1,
    Failure1Wide,
    Failure2,
    Failure3,
    ActionSweep,
    LrAblation,
    ScalingAblation,
}

impl From<ExperimentArg> for ExperimentId {
    fn from(value: ExperimentArg) -> Self {
        match value {
            ExperimentArg::Failure1 => ExperimentId::Failure1,
            ExperimentArg::Failure1Wide => ExperimentId::Failure1Wide,
            ExperimentArg::Failure2 => ExperimentId::Failure2,
            ExperimentArg::Failure3 => ExperimentId::Failure3,
            ExperimentArg::ActionSweep => ExperimentId::ActionSweep,
            ExperimentArg::LrAblation => ExperimentId::LrAblation,
            ExperimentArg::ScalingAblation => ExperimentId::ScalingAblation,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PolicyArg {
    Gaussian,
    Beta,
    Softmax,
    Discretized,
}

impl From<PolicyArg> for PolicyKind {
    fn from(value: PolicyArg) -> Self {
        match value {
            PolicyArg::Gaussian => PolicyKind::Gaussian,
            PolicyArg::Beta => PolicyKind::Beta,
            PolicyArg::Softmax => PolicyKind::Softmax,
            PolicyArg::Discretized => PolicyKind::Discretized,
        }
    }
}

fn load_config(common: &CommonArgs) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(runs) = common.runs {
        config.runs = runs;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    config.jobs = common.jobs.or(config.jobs);
    config.svg |= common.svg;
    Ok(config)
}

/// Preset adjustments per experiment id, applied before flag overrides.
fn apply_experiment_preset(config: &mut ExperimentConfig) {
    match config.experiment {
        ExperimentId::Failure2 | ExperimentId::ActionSweep => {
            config.policy = PolicyKind::Softmax;
        }
        ExperimentId::LrAblation => {
            config.policy = PolicyKind::Softmax;
            config.learning_rate = 0.001;
            config.iterations = 1000;
        }
        _ => {}
    }
}

fn cmd_run(
    common: &CommonArgs,
    experiment: Option<ExperimentArg>,
    policy: Option<PolicyArg>,
    surrogate: Option<String>,
    actions: Option<usize>,
    lr: Option<f64>,
    iterations: Option<usize>,
) -> anyhow::Result<bool> {
    let mut config = load_config(common)?;
    if let Some(e) = experiment {
        config.experiment = e.into();
        apply_experiment_preset(&mut config);
    }
    if let Some(p) = policy {
        config.policy = p.into();
    }
    if let Some(s) = &surrogate {
        config.surrogate = SurrogateName::parse(s)
            .ok_or_else(|| anyhow::anyhow!("unknown surrogate {s:?}"))?;
    }
    if let Some(n) = actions {
        config.actions = n;
    }
    if let Some(lr) = lr {
        config.learning_rate = lr;
    }
    if let Some(k) = iterations {
        config.iterations = k;
    }
    config.validate()?;

    if config.experiment == ExperimentId::ScalingAblation {
        return cmd_scaling_ablation(&config);
    }

    let started = unix_now();
    let outcome = execute(&config)?;
    let dir = config.out_dir.clone();
    let mut manifest_runs = Vec::new();
    let mut outputs = Vec::new();
    for (resolved, run, summary) in &outcome.per_run {
        let name = format!("run_{:03}.csv", resolved.run_index);
        let path = output::out_path(&dir, &name);
        output::write_iteration_csv(&path, &config, &run.records)?;
        let verdict = if summary.diverged {
            "diverged"
        } else if summary.collapsed {
            "collapsed"
        } else if summary.converged {
            "converged"
        } else {
            "completed"
        };
        manifest_runs.push(ManifestRun {
            run_index: resolved.run_index,
            seed: resolved.seed,
            csv: name.clone(),
            verdict: verdict.to_string(),
            final_policy: run.final_policy().cloned(),
        });
        outputs.push(name);

        if config.svg {
            let series = vec![(
                "probe reward".to_string(),
                run.records
                    .iter()
                    .map(|r| (r.iteration as f64, r.probe_reward))
                    .collect(),
            )];
            let plot = svg::line_plot(
                &format!("{} run {}", config.experiment.as_str(), resolved.run_index),
                "iteration",
                "probe reward",
                &series,
            );
            let name = format!("run_{:03}_reward.svg", resolved.run_index);
            output::write_file(&output::out_path(&dir, &name), &plot)?;
            outputs.push(name);
            if let (Some((lo, hi)), true) = (resolved.env.bounds(), config.density_points > 0) {
                let rows: Vec<Vec<f64>> = run
                    .records
                    .iter()
                    .filter_map(|r| r.density_grid.clone())
                    .collect();
                if !rows.is_empty() {
                    let name = format!("run_{:03}_density.svg", resolved.run_index);
                    let map = svg::heatmap(
                        &format!("policy density, run {}", resolved.run_index),
                        &rows,
                        lo,
                        hi,
                    );
                    output::write_file(&output::out_path(&dir, &name), &map)?;
                    outputs.push(name);
                }
            }
        }
    }
    let summaries: Vec<_> = outcome.per_run.iter().map(|(_, _, s)| s.clone()).collect();
    output::write_summary_json(
        &output::out_path(&dir, "summary.json"),
        &config,
        &outcome.aggregate,
        &summaries,
    )?;
    outputs.push("summary.json".into());
    let manifest = RunManifest {
        schema_version: 1,
        artifact_version: ARTIFACT_VERSION.to_string(),
        config: config.clone(),
        config_hash: config_hash(&config),
        master_seed: config.seed,
        started_unix: started,
        finished_unix: unix_now(),
        runs: manifest_runs,
        outputs,
    };
    output::write_manifest(&output::out_path(&dir, "manifest.json"), &manifest)?;
    println!(
        "{}: {} runs, convergence {}/{} ({:.2}), collapse {}/{}, diverged {}",
        config.experiment.as_str(),
        outcome.aggregate.runs,
        outcome.aggregate.converged,
        outcome.aggregate.runs,
        outcome.aggregate.convergence_fraction,
        outcome.aggregate.collapsed,
        outcome.aggregate.runs,
        outcome.aggregate.diverged,
    );
    Ok(true)
}

/// Reward-scaling by advantage-normalization matrix on the single-peak
/// bandit: six cells, one aggregate row each.
fn cmd_scaling_ablation(config: &ExperimentConfig) -> anyhow::Result<bool> {
    let started = unix_now();
    let schemes: [(&str, f64, bool); 3] = [
        ("none", 1.0, false),
        ("constant", config.reward_scale, false),
        ("return_std", 1.0, true),
    ];
    let mut text = ppo_lab_cli::output::csv_header(config);
    text.push_str("scaling,advantage_normalization,converged,total,fraction,collapse_fraction,mean_final_reward\n");
    for (name, scale, return_std) in schemes {
        for normalization in [false, true] {
            let mut cell = config.clone();
            cell.reward_scale = scale;
            cell.return_std_scaling = return_std;
            cell.advantage_normalization = normalization;
            let outcome = execute(&cell)?;
            let a = &outcome.aggregate;
            text.push_str(&format!(
                "{name},{normalization},{},{},{},{},{}\n",
                a.converged, a.runs, a.convergence_fraction, a.collapse_fraction, a.mean_final_reward
            ));
            println!(
                "scaling_ablation {name} norm={normalization}: converged {}/{} collapse {:.2}",
                a.converged, a.runs, a.collapse_fraction
            );
        }
    }
    let dir = config.out_dir.clone();
    ppo_lab_cli::output::write_file(&output::out_path(&dir, "scaling_ablation.csv"), &text)?;
    let manifest = RunManifest {
        schema_version: 1,
        artifact_version: ARTIFACT_VERSION.to_string(),
        config: config.clone(),
        config_hash: config_hash(config),
        master_seed: config.seed,
        started_unix: started,
        finished_unix: unix_now(),
        runs: vec![],
        outputs: vec!["scaling_ablation.csv".into()],
    };
    output::write_manifest(&output::out_path(&dir, "manifest.json"), &manifest)?;
    Ok(true)
}

fn cmd_sweep(common: &CommonArgs, actions: &str, surrogates: &str) -> anyhow::Result<bool> {
    let mut config = load_config(common)?;
    config.experiment = ExperimentId::ActionSweep;
    config.policy = PolicyKind::Softmax;
    let actions = parse_usize_list(actions)?;
    let surrogates = parse_surrogate_list(surrogates)?;
    let started = unix_now();
    let cells = run_sweep(&config, &actions, &surrogates)?;
    let dir = config.out_dir.clone();
    output::write_sweep_csv(&output::out_path(&dir, "sweep.csv"), &config, &cells)?;
    if config.svg {
        let series: Vec<(String, Vec<(f64, f64)>)> = surrogates
            .iter()
            .map(|s| {
                (
                    s.as_str().to_string(),
                    cells
                        .iter()
                        .filter(|c| c.surrogate == *s)
                        .map(|c| (c.actions as f64, c.fraction))
                        .collect(),
                )
            })
            .collect();
        let plot = svg::line_plot(
            "optimal-convergence fraction vs action count",
            "actions",
            "fraction",
            &series,
        );
        output::write_file(&output::out_path(&dir, "sweep.svg"), &plot)?;
    }
    let manifest = RunManifest {
        schema_version: 1,
        artifact_version: ARTIFACT_VERSION.to_string(),
        config: config.clone(),
        config_hash: config_hash(&config),
        master_seed: config.seed,
        started_unix: started,
        finished_unix: unix_now(),
        runs: vec![],
        outputs: vec!["sweep.csv".into()],
    };
    output::write_manifest(&output::out_path(&dir, "manifest.json"), &manifest)?;
    for cell in &cells {
        println!(
            "sweep n={} {}: {}/{} ({:.2}) ci [{:.2}, {:.2}]",
            cell.actions,
            cell.surrogate.as_str(),
            cell.converged,
            cell.total,
            cell.fraction,
            cell.ci_low,
            cell.ci_high
        );
    }
    Ok(true)
}

fn cmd_regret(
    common: &CommonArgs,
    mode: &str,
    actions: usize,
    k: usize,
    eta: f64,
) -> anyhow::Result<bool> {
    let mut config = load_config(common)?;
    config.experiment = ExperimentId::Failure2;
    config.actions = actions;
    let mode = mode_from_str(mode)?;
    let dir = config.out_dir.clone();
    let started = unix_now();
    let mut ok = true;
    let mut outputs = Vec::new();
    for run_index in 0..config.runs {
        let outcome = run_regret(&config, mode, run_index, k, eta)?;
        let name = format!("ledger_{:03}.csv", run_index);
        output::write_ledger_csv(
            &output::out_path(&dir, &name),
            &config,
            &outcome.ledger,
            &outcome.prefix_checks,
        )?;
        outputs.push(name);
        match mode {
            RegretMode::Exact => {
                if !regret_verdict(mode, &outcome) {
                    ok = false;
                    println!("regret run {run_index}: BOUND VIOLATED");
                } else {
                    println!(
                        "regret run {run_index}: bound holds at all {} prefixes",
                        outcome.prefix_checks.len()
                    );
                }
            }
            RegretMode::Ppo => {
                println!(
                    "regret run {run_index}: residual alpha max {:.4e}, general bound {} (report only)",
                    outcome.max_alpha,
                    if outcome.all_hold { "holds" } else { "violated" }
                );
            }
        }
    }
    let manifest = RunManifest {
        schema_version: 1,
        artifact_version: ARTIFACT_VERSION.to_string(),
        config: config.clone(),
        config_hash: config_hash(&config),
        master_seed: config.seed,
        started_unix: started,
        finished_unix: unix_now(),
        runs: vec![],
        outputs,
    };
    output::write_manifest(&output::out_path(&dir, "manifest.json"), &manifest)?;
    Ok(ok)
}

fn cmd_diagnose(
    common: &CommonArgs,
    experiment: Option<ExperimentArg>,
    policy: Option<PolicyArg>,
    surrogate: Option<String>,
    warmup: usize,
) -> anyhow::Result<bool> {
    let mut config = load_config(common)?;
    config.experiment = experiment
        .map(Into::into)
        .unwrap_or(ExperimentId::Failure1Wide);
    if let Some(p) = policy {
        config.policy = p.into();
    }
    if let Some(s) = &surrogate {
        config.surrogate = SurrogateName::parse(s)
            .ok_or_else(|| anyhow::anyhow!("unknown surrogate {s:?}"))?;
    }
    if config.density_points == 0 {
        config.density_points = 201;
    }
    let outcome = run_diagnose(&config, warmup)?;
    let dir = config.out_dir.clone();
    output::write_diagnose_csv(&output::out_path(&dir, "diagnose.csv"), &config, &outcome.rows)?;
    if config.svg {
        let series = vec![
            (
                "weighting".to_string(),
                outcome
                    .rows
                    .iter()
                    .filter(|r| r.weighting.is_finite())
                    .map(|r| (r.action, r.weighting))
                    .collect::<Vec<_>>(),
            ),
            (
                "gradient contribution".to_string(),
                outcome
                    .rows
                    .iter()
                    .map(|r| (r.action, r.grad_contrib))
                    .collect::<Vec<_>>(),
            ),
        ];
        let plot = svg::line_plot(
            "per-sample weighting after one iteration",
            "action",
            "weight",
            &series,
        );
        output::write_file(&output::out_path(&dir, "diagnose.svg"), &plot)?;
    }
    println!(
        "diagnose: {} samples dumped, post-iteration probe reward {:.3}",
        outcome.rows.len(),
        outcome.probe_reward
    );
    Ok(true)
}

fn cmd_landscape(common: &CommonArgs, env: &str, points: usize, actions: usize) -> anyhow::Result<bool> {
    let config = load_config(common)?;
    let (bandit, grid): (Bandit, Vec<f64>) = match env {
        "single_peak" => {
            let b = Bandit::SinglePeak(SinglePeakBandit::standard());
            let (lo, hi) = b.bounds().unwrap();
            (b, linspace(lo, hi, points))
        }
        "single_peak_wide" => {
            let b = Bandit::SinglePeak(SinglePeakBandit::wide());
            let (lo, hi) = b.bounds().unwrap();
            (b, linspace(lo, hi, points))
        }
        "double_peak" => {
            let b = Bandit::DoublePeak(DoublePeakBandit::standard());
            let (lo, hi) = b.bounds().unwrap();
            (b, linspace(lo, hi, points))
        }
        "discrete" => {
            let b = Bandit::DiscreteSparse(DiscreteSparseBandit::new(actions, config.seed)?);
            (b, (0..actions).map(|i| i as f64).collect())
        }
        other => anyhow::bail!("unknown environment {other:?}"),
    };
    let probe = bandit.landscape_probe(&grid)?;
    output::write_landscape_csv(
        &output::out_path(&config.out_dir, "landscape.csv"),
        &config,
        &probe,
    )?;
    if config.svg {
        let plot = svg::line_plot(
            &format!("mean reward landscape: {env}"),
            "action",
            "mean reward",
            &[("mean reward".to_string(), probe.clone())],
        );
        output::write_file(&output::out_path(&config.out_dir, "landscape.svg"), &plot)?;
    }
    println!("landscape: {} points written", probe.len());
    Ok(true)
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run {
            common,
            experiment,
            policy,
            surrogate,
            actions,
            lr,
            iterations,
        } => run_pool(common.jobs, || {
            cmd_run(&common, experiment, policy, surrogate, actions, lr, iterations)
        }),
        Command::Sweep {
            common,
            actions,
            surrogates,
        } => cmd_sweep(&common, &actions, &surrogates),
        Command::Gradcheck { seed, configs } => {
            let report = run_gradcheck(&GradcheckArgs {
                seed,
                configs_per_cell: configs,
            })?;
            Ok(report.passed())
        }
        Command::Regret {
            common,
            mode,
            actions,
            k,
            eta,
        } => cmd_regret(&common, &mode, actions, k, eta),
        Command::Diagnose {
            common,
            experiment,
            policy,
            surrogate,
            warmup,
        } => cmd_diagnose(&common, experiment, policy, surrogate, warmup),
        Command::Landscape {
            common,
            env,
            points,
            actions,
        } => cmd_landscape(&common, &env, points, actions),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
