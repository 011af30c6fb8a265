//! Experiment configuration and run manifests.
//!
//! The config file format is a flat JSON document mirroring
//! [`ExperimentConfig`]; command-line flags override file values. Every
//! output CSV carries the artifact version, master seed, and a hash of the
//! resolved config, so a manifest pins everything needed to reproduce its
//! files byte for byte.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    /// Clipped PPO on the single-peak bandit (bounded reward support).
    Failure1,
    /// Single-peak bandit with the wide [-3, 0] action bounds.
    Failure1Wide,
    /// Discrete sparse bandit (one optimal action among n).
    Failure2,
    /// Double-peak bandit (suboptimal peak near the initialization).
    Failure3,
    /// Action-count sweep over the discrete bandit.
    ActionSweep,
    /// Learning-rate ablation on the discrete bandit.
    LrAblation,
    /// Reward-scaling and advantage-normalization ablation.
    ScalingAblation,
}

impl ExperimentId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::Failure1 => "failure1",
            ExperimentId::Failure1Wide => "failure1_wide",
            ExperimentId::Failure2 => "failure2",
            ExperimentId::Failure3 => "failure3",
            ExperimentId::ActionSweep => "action_sweep",
            ExperimentId::LrAblation => "lr_ablation",
            ExperimentId::ScalingAblation => "scaling_ablation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Gaussian,
    Beta,
    Softmax,
    /// Softmax over the single-peak interval discretized in 0.1 steps.
    Discretized,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Gaussian => "gaussian",
            PolicyKind::Beta => "beta",
            PolicyKind::Softmax => "softmax",
            PolicyKind::Discretized => "discretized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateName {
    Clip,
    ForwardKl,
    ReverseKl,
    Unregularized,
}

impl SurrogateName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SurrogateName::Clip => "clip",
            SurrogateName::ForwardKl => "fkl",
            SurrogateName::ReverseKl => "rkl",
            SurrogateName::Unregularized => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "clip" => Some(SurrogateName::Clip),
            "fkl" | "forward_kl" => Some(SurrogateName::ForwardKl),
            "rkl" | "reverse_kl" => Some(SurrogateName::ReverseKl),
            "none" | "unregularized" => Some(SurrogateName::Unregularized),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineName {
    BatchMean,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub policy: PolicyKind,
    pub surrogate: SurrogateName,
    pub epsilon: f64,
    pub beta: f64,
    /// Discrete action count (failure2 / sweeps).
    pub actions: usize,
    pub runs: usize,
    pub seed: u64,
    pub iterations: usize,
    pub timesteps: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub advantage_normalization: bool,
    /// Constant reward scale; the experiment bundles calibrate learning
    /// speed against the fixed KL penalty through this factor.
    pub reward_scale: f64,
    /// Replace constant scaling with the running return-std scheme.
    pub return_std_scaling: bool,
    pub baseline: BaselineName,
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
    pub svg: bool,
    /// Per-iteration density dump resolution (0 disables).
    pub density_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentId::Failure1,
            policy: PolicyKind::Gaussian,
            surrogate: SurrogateName::Clip,
            epsilon: 0.2,
            beta: 3.0,
            actions: 100,
            runs: 20,
            seed: 42,
            iterations: 50,
            timesteps: 512,
            minibatch: 32,
            epochs: 10,
            learning_rate: 0.1,
            advantage_normalization: false,
            reward_scale: 2.25,
            return_std_scaling: false,
            baseline: BaselineName::BatchMean,
            out_dir: PathBuf::from("out"),
            jobs: None,
            svg: false,
            density_points: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.runs == 0 {
            anyhow::bail!("run count must be >= 1");
        }
        if self.actions < 2 {
            anyhow::bail!("discrete experiments need at least 2 actions");
        }
        Ok(())
    }
}

/// FNV-1a hash of the canonical JSON encoding of a config. Execution
/// environment (output directory, worker count, plot toggle) is excluded so
/// the hash identifies the experiment, not where it ran.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut canonical = config.clone();
    canonical.out_dir = PathBuf::new();
    canonical.jobs = None;
    canonical.svg = false;
    let text = serde_json::to_string(&canonical).expect("config serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRun {
    pub run_index: usize,
    pub seed: u64,
    pub csv: String,
    pub verdict: String,
    /// Raw parameters of the final policy, for checkpoint-style reuse.
    pub final_policy: Option<ppo_lab::policy::PolicyParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub master_seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub runs: Vec<ManifestRun>,
    pub outputs: Vec<String>,
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_flat_json() {
        let config = ExperimentConfig {
            experiment: ExperimentId::Failure2,
            policy: PolicyKind::Softmax,
            actions: 50,
            ..Default::default()
        };
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_config_files_fill_defaults() {
        let back: ExperimentConfig =
            serde_json::from_str(r#"{"experiment":"failure3","runs":5}"#).unwrap();
        assert_eq!(back.experiment, ExperimentId::Failure3);
        assert_eq!(back.runs, 5);
        assert_eq!(back.timesteps, 512);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 43;
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
