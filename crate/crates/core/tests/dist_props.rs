//! Randomized property suites for the distribution families: score vs
//! finite differences, zero-mean score, density normalization, KL
//! non-negativity, and the digamma recurrence at scale.

mod common;

use common::{central_diff, rel_err, simpson};
use ppo_lab::dist::{kl_divergence, Action, Categorical, Dist, Gaussian1D, ScaledBeta};
use ppo_lab::policy::PolicyParams;
use ppo_lab::rng::Rng;

fn uniform_in(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform01()
}

#[test]
fn gaussian_score_matches_finite_differences() {
    let mut rng = Rng::new(11);
    for _ in 0..200 {
        let mu = uniform_in(&mut rng, -3.0, 3.0);
        let sigma = uniform_in(&mut rng, 0.3, 3.0);
        let dist = Dist::Gaussian(Gaussian1D::new(mu, sigma).unwrap());
        let a = dist.sample(&mut rng).unwrap();
        let score = dist.score(a).unwrap();
        let fd = central_diff(&[mu, sigma], 1e-6, |p| {
            Dist::Gaussian(Gaussian1D::new(p[0], p[1]).unwrap())
                .log_prob(a)
                .unwrap()
        });
        for (s, f) in score.iter().zip(&fd) {
            assert!(rel_err(*s, *f) <= 1e-5, "score {s} vs fd {f}");
        }
    }
}

#[test]
fn beta_score_matches_finite_differences() {
    let mut rng = Rng::new(12);
    for _ in 0..200 {
        let alpha = uniform_in(&mut rng, 1.2, 8.0);
        let beta = uniform_in(&mut rng, 1.2, 8.0);
        let lo = uniform_in(&mut rng, -3.0, -0.5);
        let hi = uniform_in(&mut rng, 0.5, 3.0);
        let dist = Dist::Beta(ScaledBeta::new(alpha, beta, lo, hi).unwrap());
        let a = dist.sample(&mut rng).unwrap();
        let score = dist.score(a).unwrap();
        let fd = central_diff(&[alpha, beta], 1e-6, |p| {
            Dist::Beta(ScaledBeta::new(p[0], p[1], lo, hi).unwrap())
                .log_prob(a)
                .unwrap()
        });
        for (s, f) in score.iter().zip(&fd) {
            assert!(rel_err(*s, *f) <= 1e-5, "score {s} vs fd {f}");
        }
    }
}

#[test]
fn scores_have_zero_mean_under_the_distribution() {
    // E[score] = 0, checked to three standard errors over 1e5 samples.
    let n = 100_000;
    let cases: Vec<Dist> = vec![
        Dist::Gaussian(Gaussian1D::new(0.7, 1.3).unwrap()),
        Dist::Gaussian(Gaussian1D::new(-2.0, 0.4).unwrap()),
        Dist::Beta(ScaledBeta::new(2.5, 1.7, -1.5, 1.5).unwrap()),
        Dist::Beta(ScaledBeta::new(1.3, 4.0, 0.0, 1.0).unwrap()),
    ];
    let mut rng = Rng::new(13);
    for dist in &cases {
        let dim = 2;
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for _ in 0..n {
            let a = dist.sample(&mut rng).unwrap();
            let s = dist.score(a).unwrap();
            for j in 0..dim {
                sum[j] += s[j];
                sum_sq[j] += s[j] * s[j];
            }
        }
        for j in 0..dim {
            let mean = sum[j] / n as f64;
            let var = sum_sq[j] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!(
                mean.abs() <= 3.0 * se + 1e-12,
                "{dist:?} component {j}: mean {mean}, se {se}"
            );
        }
    }

    // Softmax score (one-hot minus probs), through the policy chain rule.
    let params = PolicyParams::Softmax {
        logits: vec![0.4, -0.2, 1.0, 0.0],
    };
    let dist = params.realize().unwrap();
    let mut sum = vec![0.0; 4];
    for _ in 0..n {
        let a = dist.sample(&mut rng).unwrap();
        let s = params.score_raw(a).unwrap();
        for j in 0..4 {
            sum[j] += s[j];
        }
    }
    for j in 0..4 {
        // Components are bounded by 1, so 3 standard errors is ~0.01.
        assert!((sum[j] / n as f64).abs() < 0.01);
    }
}

#[test]
fn densities_normalize_to_one() {
    let mut rng = Rng::new(14);
    for _ in 0..25 {
        let mu = uniform_in(&mut rng, -2.0, 2.0);
        let sigma = uniform_in(&mut rng, 0.2, 2.5);
        let dist = Dist::Gaussian(Gaussian1D::new(mu, sigma).unwrap());
        let mass = simpson(mu - 10.0 * sigma, mu + 10.0 * sigma, 20_000, |x| {
            dist.log_prob(Action::Continuous(x)).unwrap().exp()
        });
        assert!((mass - 1.0).abs() < 1e-6, "gaussian mass = {mass}");
    }
    for _ in 0..25 {
        let alpha = uniform_in(&mut rng, 1.0, 8.0);
        let beta = uniform_in(&mut rng, 1.0, 8.0);
        let lo = uniform_in(&mut rng, -2.0, 0.0);
        let hi = uniform_in(&mut rng, 0.5, 2.0);
        let dist = Dist::Beta(ScaledBeta::new(alpha, beta, lo, hi).unwrap());
        // Substituting x = sin^2(t) smooths the fractional-power endpoints.
        let width = hi - lo;
        let mass = simpson(0.0, std::f64::consts::FRAC_PI_2, 20_000, |t| {
            let x = t.sin() * t.sin();
            let a = lo + width * x;
            let jac = 2.0 * t.sin() * t.cos() * width;
            dist.log_prob(Action::Continuous(a)).unwrap().exp() * jac
        });
        assert!(
            (mass - 1.0).abs() < 1e-6,
            "beta({alpha:.2},{beta:.2}) mass = {mass}"
        );
    }
}

#[test]
fn kl_is_nonnegative_and_zero_only_at_equality() {
    let mut rng = Rng::new(15);
    for _ in 0..200 {
        let p = Dist::Gaussian(
            Gaussian1D::new(uniform_in(&mut rng, -3.0, 3.0), uniform_in(&mut rng, 0.2, 3.0))
                .unwrap(),
        );
        let q = Dist::Gaussian(
            Gaussian1D::new(uniform_in(&mut rng, -3.0, 3.0), uniform_in(&mut rng, 0.2, 3.0))
                .unwrap(),
        );
        assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }
    for _ in 0..200 {
        let p = Dist::Beta(
            ScaledBeta::new(
                uniform_in(&mut rng, 1.0, 6.0),
                uniform_in(&mut rng, 1.0, 6.0),
                0.0,
                1.0,
            )
            .unwrap(),
        );
        let q = Dist::Beta(
            ScaledBeta::new(
                uniform_in(&mut rng, 1.0, 6.0),
                uniform_in(&mut rng, 1.0, 6.0),
                0.0,
                1.0,
            )
            .unwrap(),
        );
        let kl = kl_divergence(&p, &q).unwrap();
        assert!(kl >= -1e-12, "kl = {kl}");
        assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
    }
    for _ in 0..200 {
        let raw: Vec<f64> = (0..4).map(|_| rng.uniform01() + 0.05).collect();
        let sum: f64 = raw.iter().sum();
        let p = Dist::Categorical(Categorical::new(raw.iter().map(|x| x / sum).collect()).unwrap());
        let raw: Vec<f64> = (0..4).map(|_| rng.uniform01() + 0.05).collect();
        let sum: f64 = raw.iter().sum();
        let q = Dist::Categorical(Categorical::new(raw.iter().map(|x| x / sum).collect()).unwrap());
        assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-15);
    }
}

#[test]
fn categorical_kl_matches_direct_summation_oracle() {
    let p = Categorical::new(vec![0.5, 0.5]).unwrap();
    let q = Categorical::new(vec![0.9, 0.1]).unwrap();
    let direct: f64 = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 })
        .sum();
    let kl = kl_divergence(&Dist::Categorical(p), &Dist::Categorical(q)).unwrap();
    assert!((kl - direct).abs() < 1e-15);
    assert!((kl - 0.510_825_623_765_990_7).abs() < 1e-12);
}
