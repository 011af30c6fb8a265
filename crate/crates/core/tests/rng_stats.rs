//! Distributional goodness-of-fit for every sampler, at significance 0.001
//! with 1e5 draws and fixed test seeds.

mod common;

use common::{ks_critical, ks_statistic, normal_cdf};
use ppo_lab::rng::Rng;

const N: usize = 100_000;

fn sorted_draws(mut draw: impl FnMut() -> f64) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..N).map(|_| draw()).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs
}

#[test]
fn uniform_passes_kolmogorov() {
    let mut rng = Rng::new(101);
    let xs = sorted_draws(|| rng.uniform01());
    let ks = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
    assert!(ks < ks_critical(N), "ks = {ks}");
}

#[test]
fn normal_passes_kolmogorov() {
    let mut rng = Rng::new(102);
    let xs = sorted_draws(|| rng.sample_normal(0.0, 1.0).unwrap());
    let ks = ks_statistic(&xs, normal_cdf);
    assert!(ks < ks_critical(N), "ks = {ks}");

    // Shifted/scaled family reduces to the standard case.
    let mut rng = Rng::new(103);
    let xs = sorted_draws(|| rng.sample_normal(-2.0, 3.0).unwrap());
    let ks = ks_statistic(&xs, |x| normal_cdf((x + 2.0) / 3.0));
    assert!(ks < ks_critical(N), "ks = {ks}");
}

#[test]
fn beta_passes_kolmogorov() {
    // Beta(1,1) is uniform; Beta(2,2) has CDF 3x^2 - 2x^3.
    let mut rng = Rng::new(104);
    let xs = sorted_draws(|| rng.sample_beta(1.0, 1.0).unwrap());
    let ks = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
    assert!(ks < ks_critical(N), "beta(1,1) ks = {ks}");

    let mut rng = Rng::new(105);
    let xs = sorted_draws(|| rng.sample_beta(2.0, 2.0).unwrap());
    let ks = ks_statistic(&xs, |x| 3.0 * x * x - 2.0 * x * x * x);
    assert!(ks < ks_critical(N), "beta(2,2) ks = {ks}");
}

#[test]
fn categorical_passes_chi_square() {
    let probs = [0.1, 0.25, 0.05, 0.4, 0.2];
    let mut rng = Rng::new(106);
    let mut counts = [0usize; 5];
    for _ in 0..N {
        counts[rng.sample_categorical(&probs).unwrap()] += 1;
    }
    let mut chi2 = 0.0;
    for (c, p) in counts.iter().zip(&probs) {
        let expected = p * N as f64;
        chi2 += (*c as f64 - expected) * (*c as f64 - expected) / expected;
    }
    // Critical value for df = 4 at alpha = 0.001.
    assert!(chi2 < 18.467, "chi2 = {chi2}");
}
