//! Trainable policy parameterizations.
//!
//! Raw parameter vectors map to distributions through constraint-satisfying
//! realizations: the Gaussian standard deviation is `exp(raw)`, Beta shapes
//! are `softplus(raw) + 1` (so alpha, beta >= 1 for every raw value), and
//! softmax logits are free. [`PolicyParams::score_raw`] chains the
//! distribution score through those maps so the trainer can ascend directly
//! in raw parameters.

use crate::dist::{Action, Categorical, Dist, Gaussian1D, ScaledBeta};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic function (the derivative of softplus).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Raw trainable parameters of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyParams {
    Gaussian {
        mu_raw: f64,
        log_sigma_raw: f64,
    },
    Beta {
        x_alpha: f64,
        x_beta: f64,
        lo: f64,
        hi: f64,
    },
    Softmax {
        logits: Vec<f64>,
    },
}

/// Initialization schemes used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitKind {
    /// Standard normal start: `N(0, 1)`.
    GaussianStandard,
    /// Near-uniform Beta over `[lo, hi]` via `x_alpha = x_beta = -4`
    /// (alpha = beta ~ 1.018).
    BetaNearUniform { lo: f64, hi: f64 },
    /// All-zero logits: every action equally likely.
    SoftmaxUniform { n_actions: usize },
}

impl PolicyParams {
    pub fn init(kind: InitKind) -> Result<Self> {
        match kind {
            InitKind::GaussianStandard => Ok(PolicyParams::Gaussian {
                mu_raw: 0.0,
                log_sigma_raw: 0.0,
            }),
            InitKind::BetaNearUniform { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "beta init requires finite lo < hi, got lo={lo}, hi={hi}"
                    )));
                }
                Ok(PolicyParams::Beta {
                    x_alpha: -4.0,
                    x_beta: -4.0,
                    lo,
                    hi,
                })
            }
            InitKind::SoftmaxUniform { n_actions } => {
                if n_actions == 0 {
                    return Err(Error::InvalidParameter(
                        "softmax init requires at least one action".into(),
                    ));
                }
                Ok(PolicyParams::Softmax {
                    logits: vec![0.0; n_actions],
                })
            }
        }
    }

    /// Number of trainable raw parameters.
    pub fn dim(&self) -> usize {
        match self {
            PolicyParams::Gaussian { .. } => 2,
            PolicyParams::Beta { .. } => 2,
            PolicyParams::Softmax { logits } => logits.len(),
        }
    }

    /// Raw parameter vector (Beta bounds are structural, not trainable).
    pub fn raw(&self) -> Vec<f64> {
        match self {
            PolicyParams::Gaussian {
                mu_raw,
                log_sigma_raw,
            } => vec![*mu_raw, *log_sigma_raw],
            PolicyParams::Beta { x_alpha, x_beta, .. } => vec![*x_alpha, *x_beta],
            PolicyParams::Softmax { logits } => logits.clone(),
        }
    }

    pub fn set_raw(&mut self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "raw parameter length {} does not match policy dimension {}",
                raw.len(),
                self.dim()
            )));
        }
        match self {
            PolicyParams::Gaussian {
                mu_raw,
                log_sigma_raw,
            } => {
                *mu_raw = raw[0];
                *log_sigma_raw = raw[1];
            }
            PolicyParams::Beta { x_alpha, x_beta, .. } => {
                *x_alpha = raw[0];
                *x_beta = raw[1];
            }
            PolicyParams::Softmax { logits } => logits.copy_from_slice(raw),
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.raw().iter().all(|x| x.is_finite())
    }

    /// Realize the raw parameters as a distribution.
    pub fn realize(&self) -> Result<Dist> {
        if !self.is_finite() {
            return Err(Error::NonFinite("policy raw parameters".into()));
        }
        match self {
            PolicyParams::Gaussian {
                mu_raw,
                log_sigma_raw,
            } => Ok(Dist::Gaussian(Gaussian1D::new(
                *mu_raw,
                log_sigma_raw.exp(),
            )?)),
            PolicyParams::Beta {
                x_alpha,
                x_beta,
                lo,
                hi,
            } => Ok(Dist::Beta(ScaledBeta::new(
                softplus(*x_alpha) + 1.0,
                softplus(*x_beta) + 1.0,
                *lo,
                *hi,
            )?)),
            PolicyParams::Softmax { logits } => {
                Ok(Dist::Categorical(Categorical::new(softmax(logits))?))
            }
        }
    }

    pub fn log_prob(&self, a: Action) -> Result<f64> {
        self.realize()?.log_prob(a)
    }

    /// Gradient of `log pi(a)` in raw parameters, chain-ruled through the
    /// realization map.
    pub fn score_raw(&self, a: Action) -> Result<Vec<f64>> {
        match self {
            PolicyParams::Gaussian { log_sigma_raw, .. } => {
                let dist = self.realize()?;
                let s = dist.score(a)?;
                // d sigma / d log_sigma_raw = sigma.
                Ok(vec![s[0], s[1] * log_sigma_raw.exp()])
            }
            PolicyParams::Beta { x_alpha, x_beta, .. } => {
                let dist = self.realize()?;
                let s = dist.score(a)?;
                Ok(vec![s[0] * sigmoid(*x_alpha), s[1] * sigmoid(*x_beta)])
            }
            PolicyParams::Softmax { logits } => {
                let i = a.as_discrete()?;
                if i >= logits.len() {
                    return Err(Error::OutOfSupport(format!(
                        "index {i} out of range for {} logits",
                        logits.len()
                    )));
                }
                let probs = softmax(logits);
                let mut g: Vec<f64> = probs.iter().map(|p| -p).collect();
                g[i] += 1.0;
                Ok(g)
            }
        }
    }
}

/// Softmax with max subtraction; exact renormalization keeps the output on
/// the simplex to within one ulp.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Frozen copy of the data-collecting policy for one PPO iteration.
///
/// The realized distribution is cached so per-sample old log-probabilities
/// are computed once, at collection time, and never recomputed while the
/// ratio denominator must stay fixed.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    params: PolicyParams,
    dist: Dist,
}

impl PolicySnapshot {
    pub fn take(params: &PolicyParams) -> Result<Self> {
        Ok(PolicySnapshot {
            params: params.clone(),
            dist: params.realize()?,
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn dist(&self) -> &Dist {
        &self.dist
    }

    pub fn log_prob(&self, a: Action) -> Result<f64> {
        self.dist.log_prob(a)
    }
}
