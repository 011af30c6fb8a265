//! Surrogate objectives and their exact sample-based gradients.
//!
//! Four objectives are supported: the clipped objective, forward- and
//! reverse-KL penalties, and the unregularized ratio objective. All
//! expectations are Monte Carlo means over a batch collected from the frozen
//! snapshot policy, and every per-sample KL estimator is chosen so that the
//! analytic gradient is the exact derivative of the reported value on the
//! same batch (see [`objective_value`]); [`fd_gradient`] checks this by
//! central differences.

pub mod gradcheck;

use crate::dist::{Action, Dist};
use crate::error::{Error, Result};
use crate::policy::{PolicyParams, PolicySnapshot};
use serde::{Deserialize, Serialize};

/// Which surrogate objective the trainer ascends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurrogateSpec {
    Clip { epsilon: f64 },
    ForwardKl { beta: f64 },
    ReverseKl { beta: f64 },
    Unregularized,
}

impl SurrogateSpec {
    pub fn clip(epsilon: f64) -> Result<Self> {
        let s = SurrogateSpec::Clip { epsilon };
        s.validate()?;
        Ok(s)
    }

    pub fn forward_kl(beta: f64) -> Result<Self> {
        let s = SurrogateSpec::ForwardKl { beta };
        s.validate()?;
        Ok(s)
    }

    pub fn reverse_kl(beta: f64) -> Result<Self> {
        let s = SurrogateSpec::ReverseKl { beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SurrogateSpec::Clip { epsilon } => {
                if !(epsilon > 0.0 && epsilon <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "clip epsilon must lie in (0, 1], got {epsilon}"
                    )));
                }
            }
            SurrogateSpec::ForwardKl { beta } | SurrogateSpec::ReverseKl { beta } => {
                if !(beta > 0.0) || !beta.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "KL penalty beta must be positive, got {beta}"
                    )));
                }
            }
            SurrogateSpec::Unregularized => {}
        }
        Ok(())
    }
}

/// One iteration's collected data: actions, frozen old-policy
/// log-probabilities, raw rewards, and advantage estimates.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SampleBatch {
    pub actions: Vec<Action>,
    pub old_log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Validate the invariants required by the objective operations.
    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if self.old_log_probs.len() != self.len() || self.advantages.len() != self.len() {
            return Err(Error::InvalidParameter(format!(
                "batch sequences disagree: {} actions, {} old log-probs, {} advantages",
                self.len(),
                self.old_log_probs.len(),
                self.advantages.len()
            )));
        }
        if self.old_log_probs.iter().any(|lp| !lp.is_finite()) {
            return Err(Error::NonFinite("old log-probabilities".into()));
        }
        Ok(())
    }

    /// Sub-batch by index; used for minibatching.
    pub fn select(&self, indices: &[usize]) -> SampleBatch {
        SampleBatch {
            actions: indices.iter().map(|&i| self.actions[i]).collect(),
            old_log_probs: indices.iter().map(|&i| self.old_log_probs[i]).collect(),
            rewards: indices.iter().map(|&i| self.rewards[i]).collect(),
            advantages: indices.iter().map(|&i| self.advantages[i]).collect(),
        }
    }
}

fn finite_log_prob(dist: &Dist, a: Action) -> Result<f64> {
    let lp = dist.log_prob(a)?;
    if !lp.is_finite() {
        return Err(Error::NonFinite(format!("log-probability at {a:?}")));
    }
    Ok(lp)
}

/// Probability ratio `pi_new(a) / pi_old(a)`, computed in log space.
pub fn ratio(params: &PolicyParams, snapshot: &PolicySnapshot, a: Action) -> Result<f64> {
    let dist = params.realize()?;
    let lp_new = finite_log_prob(&dist, a)?;
    let lp_old = finite_log_prob(snapshot.dist(), a)?;
    Ok((lp_new - lp_old).exp())
}

fn sgn(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Indicator of a live clip gradient: inside the trust band, or pointing
/// against the advantage sign. At `adv = 0` the contribution vanishes either
/// way and the band branch alone is reported.
pub fn clip_active_mask(spec: &SurrogateSpec, r: f64, adv: f64) -> Result<bool> {
    let SurrogateSpec::Clip { epsilon } = spec else {
        return Err(Error::InvalidParameter(
            "clip_active_mask requires a Clip spec".into(),
        ));
    };
    let in_band = (r - 1.0).abs() < *epsilon;
    if adv == 0.0 {
        return Ok(in_band);
    }
    Ok(in_band || sgn(r - 1.0) != sgn(adv))
}

/// `x * ln(x)` with the continuous-limit convention at zero.
fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

struct RatioTerm {
    log_ratio: f64,
    ratio: f64,
}

fn ratio_terms(params: &PolicyParams, batch: &SampleBatch) -> Result<Vec<RatioTerm>> {
    batch.validate()?;
    let dist = params.realize()?;
    batch
        .actions
        .iter()
        .zip(&batch.old_log_probs)
        .map(|(&a, &lp_old)| {
            let lp_new = finite_log_prob(&dist, a)?;
            let log_ratio = lp_new - lp_old;
            Ok(RatioTerm {
                log_ratio,
                ratio: log_ratio.exp(),
            })
        })
        .collect()
}

/// Monte Carlo value of the surrogate objective over the batch.
///
/// Per-sample KL estimators: forward uses `-log r` and reverse uses
/// `r log r - (r - 1)`. Both are exact in expectation under old-policy
/// samples (`E[r - 1] = 0`), both vanish identically at `r = 1`, and both
/// differentiate per-sample to exactly the gradients that
/// [`objective_gradient`] reports.
pub fn objective_value(
    spec: &SurrogateSpec,
    params: &PolicyParams,
    snapshot: &PolicySnapshot,
    batch: &SampleBatch,
) -> Result<f64> {
    spec.validate()?;
    let _ = snapshot;
    let terms = ratio_terms(params, batch)?;
    let mut total = 0.0;
    for (t, &adv) in terms.iter().zip(&batch.advantages) {
        let r = t.ratio;
        total += match *spec {
            SurrogateSpec::Unregularized => r * adv,
            SurrogateSpec::Clip { epsilon } => {
                (r * adv).min(r.clamp(1.0 - epsilon, 1.0 + epsilon) * adv)
            }
            SurrogateSpec::ForwardKl { beta } => r * adv + beta * t.log_ratio,
            SurrogateSpec::ReverseKl { beta } => {
                r * adv - beta * (xlnx(r) - (r - 1.0))
            }
        };
    }
    Ok(total / batch.len() as f64)
}

/// The scalar multiplying the score in one sample's gradient contribution.
pub fn gradient_weight(spec: &SurrogateSpec, r: f64, adv: f64) -> Result<f64> {
    Ok(match *spec {
        SurrogateSpec::Unregularized => r * adv,
        SurrogateSpec::Clip { .. } => {
            if clip_active_mask(spec, r, adv)? {
                r * adv
            } else {
                0.0
            }
        }
        SurrogateSpec::ForwardKl { beta } => r * adv + beta,
        SurrogateSpec::ReverseKl { beta } => r * adv - beta * xlnx(r),
    })
}

/// Batch mean of the per-sample gradient contributions, in raw policy
/// parameters.
pub fn objective_gradient(
    spec: &SurrogateSpec,
    params: &PolicyParams,
    snapshot: &PolicySnapshot,
    batch: &SampleBatch,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let _ = snapshot;
    let terms = ratio_terms(params, batch)?;
    let mut grad = vec![0.0; params.dim()];
    for (i, t) in terms.iter().enumerate() {
        let weight = gradient_weight(spec, t.ratio, batch.advantages[i])?;
        if weight != 0.0 {
            let score = params.score_raw(batch.actions[i])?;
            for (g, s) in grad.iter_mut().zip(&score) {
                *g += weight * s;
            }
        }
    }
    let n = batch.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    Ok(grad)
}

/// Per-example weighting relative to the plain policy gradient, normalized
/// to 1 at `r = 1`.
pub fn sample_weighting(spec: &SurrogateSpec, r: f64, adv: f64) -> Result<f64> {
    spec.validate()?;
    match *spec {
        SurrogateSpec::Unregularized => Ok(1.0),
        SurrogateSpec::Clip { .. } => Ok(if clip_active_mask(spec, r, adv)? {
            1.0
        } else {
            0.0
        }),
        SurrogateSpec::ReverseKl { beta } => {
            if adv == 0.0 {
                return Err(Error::InvalidParameter(
                    "KL weighting is undefined at zero advantage".into(),
                ));
            }
            Ok(1.0 + (beta / adv) * (1.0 / r).ln())
        }
        SurrogateSpec::ForwardKl { beta } => {
            if adv == 0.0 {
                return Err(Error::InvalidParameter(
                    "KL weighting is undefined at zero advantage".into(),
                ));
            }
            Ok(1.0 + (beta / adv) * (1.0 / r - 1.0))
        }
    }
}

/// Sample estimates of both KL directions against the snapshot, evaluated on
/// the batch.
///
/// These are the non-negative unbiased forms: forward `(r - 1) - log r`,
/// reverse `r log r - (r - 1)`. Each per-sample term is >= 0, and their
/// pointwise difference is third order in `r - 1`, which is what makes the
/// two directions track each other so closely on trust-region batches.
pub fn kl_sample_estimates(
    params: &PolicyParams,
    snapshot: &PolicySnapshot,
    batch: &SampleBatch,
) -> Result<(f64, f64)> {
    let _ = snapshot;
    let terms = ratio_terms(params, batch)?;
    let n = batch.len() as f64;
    let mut fwd = 0.0;
    let mut rev = 0.0;
    for t in &terms {
        fwd += (t.ratio - 1.0) - t.log_ratio;
        rev += xlnx(t.ratio) - (t.ratio - 1.0);
    }
    Ok((fwd / n, rev / n))
}

/// Per-iteration diagnostic KL estimates with each direction sampled under
/// its own measure: forward from the old-policy batch, reverse from fresh
/// draws of the updating policy.
///
/// Unlike [`kl_sample_estimates`], the reverse direction here does not
/// saturate when the new policy abandons the old support — the fresh draws
/// see the infinite-divergence region — so the two series track each other
/// across a whole training run, collapses included.
pub fn kl_sample_estimates_two_sided(
    params: &PolicyParams,
    snapshot: &PolicySnapshot,
    batch: &SampleBatch,
    rng: &mut crate::rng::Rng,
    n_new: usize,
) -> Result<(f64, f64)> {
    let terms = ratio_terms(params, batch)?;
    let mut fwd = 0.0;
    for t in &terms {
        fwd += (t.ratio - 1.0) - t.log_ratio;
    }
    fwd /= batch.len() as f64;

    let dist = params.realize()?;
    let mut rev = 0.0;
    for _ in 0..n_new.max(1) {
        let a = dist.sample(rng)?;
        // s = pi_old(a) / pi_new(a) at a fresh new-policy draw.
        let log_s = snapshot.dist().log_prob(a)? - dist.log_prob(a)?;
        rev += (log_s.exp() - 1.0) - log_s;
    }
    rev /= n_new.max(1) as f64;
    Ok((fwd, rev))
}

/// Monte Carlo estimate of the Taylor gap between the two KL-penalty
/// gradients: `1/2 E[(r - 1)^2 score]`.
pub fn kl_gradient_gap(
    params: &PolicyParams,
    snapshot: &PolicySnapshot,
    batch: &SampleBatch,
) -> Result<Vec<f64>> {
    let _ = snapshot;
    let terms = ratio_terms(params, batch)?;
    let mut grad = vec![0.0; params.dim()];
    for (i, t) in terms.iter().enumerate() {
        let w = 0.5 * (t.ratio - 1.0) * (t.ratio - 1.0);
        let score = params.score_raw(batch.actions[i])?;
        for (g, s) in grad.iter_mut().zip(&score) {
            *g += w * s;
        }
    }
    let n = batch.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    Ok(grad)
}

/// Central finite differences of [`objective_value`] in raw parameters.
///
/// For the clipped objective the caller is responsible for evaluating away
/// from mask-boundary points (see [`near_clip_boundary`]).
pub fn fd_gradient(
    spec: &SurrogateSpec,
    params: &PolicyParams,
    snapshot: &PolicySnapshot,
    batch: &SampleBatch,
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let raw = params.raw();
    let mut grad = vec![0.0; raw.len()];
    let mut probe = params.clone();
    for j in 0..raw.len() {
        let mut plus = raw.clone();
        plus[j] += h;
        probe.set_raw(&plus)?;
        let up = objective_value(spec, &probe, snapshot, batch)?;

        let mut minus = raw.clone();
        minus[j] -= h;
        probe.set_raw(&minus)?;
        let down = objective_value(spec, &probe, snapshot, batch)?;

        grad[j] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// True when any sample's ratio sits within `margin` of the clip-mask
/// boundary `|r - 1| = epsilon`, where the clipped objective is not
/// differentiable.
pub fn near_clip_boundary(
    spec: &SurrogateSpec,
    params: &PolicyParams,
    batch: &SampleBatch,
    margin: f64,
) -> Result<bool> {
    let SurrogateSpec::Clip { epsilon } = spec else {
        return Ok(false);
    };
    let terms = ratio_terms(params, batch)?;
    Ok(terms
        .iter()
        .any(|t| ((t.ratio - 1.0).abs() - epsilon).abs() < margin))
}
