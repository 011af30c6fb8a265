//! Constructed bandit environments and a small chain MDP test fixture.
//!
//! Environments are stateless value objects: reward noise comes from the
//! caller's RNG, so they are freely shareable. Continuous environments clip
//! actions to their bounds before reward evaluation; the mean reward is
//! therefore constant beyond the bounds.

use crate::dist::Action;
use crate::error::{Error, Result};
use crate::rng::{derive_stream, Rng};
use serde::{Deserialize, Serialize};

pub const REWARD_NOISE_STD: f64 = 0.1;

/// Reward 1.0 on the open interval (-1.0, -0.8), zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglePeakBandit {
    pub lo: f64,
    pub hi: f64,
    pub noise_std: f64,
}

impl SinglePeakBandit {
    /// Bounds used with Beta and discretized policies.
    pub fn standard() -> Self {
        SinglePeakBandit {
            lo: -1.5,
            hi: 1.5,
            noise_std: REWARD_NOISE_STD,
        }
    }

    /// Wide-bound variant for per-iteration weighting diagnostics.
    pub fn wide() -> Self {
        SinglePeakBandit {
            lo: -3.0,
            hi: 0.0,
            noise_std: REWARD_NOISE_STD,
        }
    }

    fn mean_reward(&self, a: f64) -> f64 {
        let a = a.clamp(self.lo, self.hi);
        if a > -1.0 && a < -0.8 {
            1.0
        } else {
            0.0
        }
    }
}

/// Smooth two-peak landscape: a higher peak at -2 and a lower one at +1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublePeakBandit {
    pub lo: f64,
    pub hi: f64,
    pub noise_std: f64,
}

impl DoublePeakBandit {
    pub fn standard() -> Self {
        DoublePeakBandit {
            lo: -5.0,
            hi: 5.0,
            noise_std: REWARD_NOISE_STD,
        }
    }

    fn mean_reward(&self, a: f64) -> f64 {
        let a = a.clamp(self.lo, self.hi);
        1.1 * (-1.2 * (a + 2.0) * (a + 2.0)).exp() + 0.9 * (-0.9 * (a - 1.0) * (a - 1.0)).exp()
    }
}

/// Discrete bandit with one optimal action (mean reward 1.0), a suboptimal
/// block at 0.5, and the rest at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSparseBandit {
    mean_rewards: Vec<f64>,
    optimal_index: usize,
    pub noise_std: f64,
}

impl DiscreteSparseBandit {
    /// `floor(n/2)` zero-reward actions, `n - floor(n/2) - 1` actions at 0.5,
    /// and a single optimal action whose position is randomized by `seed`.
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "discrete bandit needs at least 2 actions, got {n}"
            )));
        }
        let zeros = n / 2;
        let mut rewards = vec![0.0; zeros];
        rewards.extend(std::iter::repeat(0.5).take(n - zeros - 1));
        rewards.push(1.0);
        let mut rng = Rng::new(derive_stream(seed, 0x0e9f));
        rng.shuffle(&mut rewards);
        let optimal_index = rewards
            .iter()
            .position(|&r| r == 1.0)
            .expect("one optimal action by construction");
        Ok(DiscreteSparseBandit {
            mean_rewards: rewards,
            optimal_index,
            noise_std: REWARD_NOISE_STD,
        })
    }

    /// The single-peak environment under a policy discretized in 0.1 steps
    /// over [-1.5, 1.5]: 31 actions, exactly one of which (-0.9) pays 1.0.
    pub fn discretized_single_peak() -> Self {
        let base = SinglePeakBandit::standard();
        let mean_rewards: Vec<f64> = (0..31).map(|i| base.mean_reward(-1.5 + 0.1 * i as f64)).collect();
        let optimal_index = mean_rewards
            .iter()
            .position(|&r| r == 1.0)
            .expect("-0.9 lies on the grid");
        DiscreteSparseBandit {
            mean_rewards,
            optimal_index,
            noise_std: REWARD_NOISE_STD,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.mean_rewards.len()
    }

    pub fn optimal_index(&self) -> usize {
        self.optimal_index
    }

    pub fn mean_rewards(&self) -> &[f64] {
        &self.mean_rewards
    }
}

/// Tagged union over the constructed bandits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Bandit {
    SinglePeak(SinglePeakBandit),
    DoublePeak(DoublePeakBandit),
    DiscreteSparse(DiscreteSparseBandit),
}

impl Bandit {
    /// Deterministic mean reward; continuous actions are clipped to the
    /// bounds first, invalid discrete indices are errors.
    pub fn mean_reward(&self, a: Action) -> Result<f64> {
        match self {
            Bandit::SinglePeak(env) => Ok(env.mean_reward(a.as_continuous()?)),
            Bandit::DoublePeak(env) => Ok(env.mean_reward(a.as_continuous()?)),
            Bandit::DiscreteSparse(env) => {
                let i = a.as_discrete()?;
                env.mean_rewards.get(i).copied().ok_or_else(|| {
                    Error::OutOfSupport(format!(
                        "index {i} out of range for {} actions",
                        env.n_actions()
                    ))
                })
            }
        }
    }

    /// Mean reward plus Gaussian noise.
    pub fn sample_reward(&self, a: Action, rng: &mut Rng) -> Result<f64> {
        let mean = self.mean_reward(a)?;
        let std = self.noise_std();
        if std == 0.0 {
            return Ok(mean);
        }
        Ok(mean + std * rng.std_normal())
    }

    pub fn noise_std(&self) -> f64 {
        match self {
            Bandit::SinglePeak(e) => e.noise_std,
            Bandit::DoublePeak(e) => e.noise_std,
            Bandit::DiscreteSparse(e) => e.noise_std,
        }
    }

    pub fn set_noise_std(&mut self, std: f64) {
        match self {
            Bandit::SinglePeak(e) => e.noise_std = std,
            Bandit::DoublePeak(e) => e.noise_std = std,
            Bandit::DiscreteSparse(e) => e.noise_std = std,
        }
    }

    /// Action bounds for continuous environments.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            Bandit::SinglePeak(e) => Some((e.lo, e.hi)),
            Bandit::DoublePeak(e) => Some((e.lo, e.hi)),
            Bandit::DiscreteSparse(_) => None,
        }
    }

    pub fn n_actions(&self) -> Option<usize> {
        match self {
            Bandit::DiscreteSparse(e) => Some(e.n_actions()),
            _ => None,
        }
    }

    /// Deterministic mean rewards on a probe grid. Discrete environments
    /// interpret grid values as action indices.
    pub fn landscape_probe(&self, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
        grid.iter()
            .map(|&g| {
                let action = match self {
                    Bandit::DiscreteSparse(_) => Action::Discrete(g.round() as usize),
                    _ => Action::Continuous(g),
                };
                Ok((g, self.mean_reward(action)?))
            })
            .collect()
    }

    /// Argmax of the mean reward.
    pub fn optimal_action(&self) -> Action {
        match self {
            Bandit::SinglePeak(_) => Action::Continuous(-0.9),
            Bandit::DoublePeak(_) => Action::Continuous(-2.0),
            Bandit::DiscreteSparse(e) => Action::Discrete(e.optimal_index),
        }
    }
}

/// Deterministic line of states with reward 1 on reaching the terminal;
/// fixture for the advantage-estimation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainMdp {
    pub n_states: usize,
}

impl ChainMdp {
    pub fn new(n_states: usize) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidParameter("chain needs at least one state".into()));
        }
        Ok(ChainMdp { n_states })
    }

    /// The single possible episode: `n_states` steps, reward 1 on the last.
    pub fn episode_rewards(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.n_states];
        r[self.n_states - 1] = 1.0;
        r
    }

    /// Discounted return from the start state: `gamma^(S-1)` exactly.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        gamma.powi(self.n_states as i32 - 1)
    }
}
