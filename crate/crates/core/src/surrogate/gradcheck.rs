//! Randomized finite-difference verification of every analytic surrogate
//! gradient, over all surrogate kinds and policy families.
//!
//! Clip configurations whose ratios land within a small margin of the mask
//! boundary `|r - 1| = epsilon` are excluded (the objective is not
//! differentiable there) and counted in the report.

use super::{
    fd_gradient, near_clip_boundary, objective_gradient, SampleBatch, SurrogateSpec,
};
use crate::error::Result;
use crate::policy::{PolicyParams, PolicySnapshot};
use crate::rng::Rng;
use serde::Serialize;

pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
const BOUNDARY_MARGIN: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PolicyFamily {
    Gaussian,
    Beta,
    Softmax,
}

pub const FAMILIES: [PolicyFamily; 3] = [
    PolicyFamily::Gaussian,
    PolicyFamily::Beta,
    PolicyFamily::Softmax,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SurrogateKind {
    Unregularized,
    Clip,
    ForwardKl,
    ReverseKl,
}

pub const SURROGATES: [SurrogateKind; 4] = [
    SurrogateKind::Unregularized,
    SurrogateKind::Clip,
    SurrogateKind::ForwardKl,
    SurrogateKind::ReverseKl,
];

/// One (surrogate, family) cell of the check matrix.
#[derive(Debug, Clone, Serialize)]
pub struct GradcheckCell {
    pub surrogate: SurrogateKind,
    pub family: PolicyFamily,
    pub checked: usize,
    pub excluded: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub fd_step: f64,
    pub cells: Vec<GradcheckCell>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(|c| c.max_rel_err <= self.tolerance)
    }

    pub fn total_excluded(&self) -> usize {
        self.cells.iter().map(|c| c.excluded).sum()
    }
}

/// A randomized (snapshot, perturbed params, batch) instance for one family.
pub struct CheckInstance {
    pub snapshot_params: PolicyParams,
    pub params: PolicyParams,
    pub batch_actions: usize,
}

fn uniform_in(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform01()
}

fn random_instance(family: PolicyFamily, rng: &mut Rng) -> (PolicyParams, PolicyParams) {
    match family {
        PolicyFamily::Gaussian => {
            let snap = PolicyParams::Gaussian {
                mu_raw: uniform_in(rng, -2.0, 2.0),
                log_sigma_raw: uniform_in(rng, -1.2, 0.8),
            };
            let mut new = snap.clone();
            let raw = snap.raw();
            new.set_raw(&[
                raw[0] + uniform_in(rng, -0.15, 0.15),
                raw[1] + uniform_in(rng, -0.15, 0.15),
            ])
            .unwrap();
            (snap, new)
        }
        PolicyFamily::Beta => {
            let lo = uniform_in(rng, -2.0, -1.0);
            let hi = uniform_in(rng, 1.0, 2.0);
            let snap = PolicyParams::Beta {
                x_alpha: uniform_in(rng, -1.0, 2.0),
                x_beta: uniform_in(rng, -1.0, 2.0),
                lo,
                hi,
            };
            let mut new = snap.clone();
            let raw = snap.raw();
            new.set_raw(&[
                raw[0] + uniform_in(rng, -0.2, 0.2),
                raw[1] + uniform_in(rng, -0.2, 0.2),
            ])
            .unwrap();
            (snap, new)
        }
        PolicyFamily::Softmax => {
            let n = 3 + (rng.next_u64() % 6) as usize;
            let logits: Vec<f64> = (0..n).map(|_| uniform_in(rng, -1.0, 1.0)).collect();
            let snap = PolicyParams::Softmax { logits };
            let mut new = snap.clone();
            let raw: Vec<f64> = snap
                .raw()
                .iter()
                .map(|z| z + uniform_in(rng, -0.2, 0.2))
                .collect();
            new.set_raw(&raw).unwrap();
            (snap, new)
        }
    }
}

fn random_batch(snapshot: &PolicySnapshot, n: usize, rng: &mut Rng) -> Result<SampleBatch> {
    let mut actions = Vec::with_capacity(n);
    let mut old_log_probs = Vec::with_capacity(n);
    let mut advantages = Vec::with_capacity(n);
    for _ in 0..n {
        let a = snapshot.dist().sample(rng)?;
        actions.push(a);
        old_log_probs.push(snapshot.log_prob(a)?);
        advantages.push(uniform_in(rng, -2.0, 2.0));
    }
    Ok(SampleBatch {
        rewards: advantages.clone(),
        actions,
        old_log_probs,
        advantages,
    })
}

fn make_spec(kind: SurrogateKind, rng: &mut Rng) -> SurrogateSpec {
    match kind {
        SurrogateKind::Unregularized => SurrogateSpec::Unregularized,
        SurrogateKind::Clip => SurrogateSpec::Clip { epsilon: 0.2 },
        SurrogateKind::ForwardKl => SurrogateSpec::ForwardKl {
            beta: uniform_in(rng, 0.5, 5.0),
        },
        SurrogateKind::ReverseKl => SurrogateSpec::ReverseKl {
            beta: uniform_in(rng, 0.5, 5.0),
        },
    }
}

/// Scale-aware gradient discrepancy: infinity-norm error over the larger of
/// the two gradient norms (floored at 1e-8 so near-zero pairs compare
/// absolutely).
pub fn gradient_rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff: f64 = analytic
        .iter()
        .zip(fd)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / inf(analytic).max(inf(fd)).max(1e-8)
}

pub(crate) fn run_with_gradient<F>(
    seed: u64,
    configs_per_cell: usize,
    tolerance: f64,
    fd_step: f64,
    gradient_fn: F,
) -> Result<GradcheckReport>
where
    F: Fn(&SurrogateSpec, &PolicyParams, &PolicySnapshot, &SampleBatch) -> Result<Vec<f64>>,
{
    let mut cells = Vec::new();
    for (cell_idx, &surrogate) in SURROGATES.iter().enumerate() {
        for (fam_idx, &family) in FAMILIES.iter().enumerate() {
            let mut rng = Rng::new(
                crate::rng::derive_stream(seed, (cell_idx * FAMILIES.len() + fam_idx) as u64),
            );
            let mut checked = 0;
            let mut excluded = 0;
            let mut max_rel_err: f64 = 0.0;
            while checked < configs_per_cell {
                let (snap_params, params) = random_instance(family, &mut rng);
                let snapshot = PolicySnapshot::take(&snap_params)?;
                let batch = random_batch(&snapshot, 16, &mut rng)?;
                let spec = make_spec(surrogate, &mut rng);
                if near_clip_boundary(&spec, &params, &batch, BOUNDARY_MARGIN)? {
                    excluded += 1;
                    continue;
                }
                let analytic = gradient_fn(&spec, &params, &snapshot, &batch)?;
                let fd = fd_gradient(&spec, &params, &snapshot, &batch, fd_step)?;
                max_rel_err = max_rel_err.max(gradient_rel_err(&analytic, &fd));
                checked += 1;
            }
            cells.push(GradcheckCell {
                surrogate,
                family,
                checked,
                excluded,
                max_rel_err,
            });
        }
    }
    Ok(GradcheckReport {
        tolerance,
        fd_step,
        cells,
    })
}

/// Run the full finite-difference suite: every surrogate crossed with every
/// policy family, `configs_per_cell` randomized instances each.
pub fn run(
    seed: u64,
    configs_per_cell: usize,
    tolerance: f64,
    fd_step: f64,
) -> Result<GradcheckReport> {
    run_with_gradient(seed, configs_per_cell, tolerance, fd_step, objective_gradient)
}
