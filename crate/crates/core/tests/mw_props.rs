//! Randomized suites for the multiplicative-weights machinery: Bregman
//! inequality on floor-constrained simplices, water-filling vs grid search,
//! regret prefixes on exact MW runs, and the reverse-KL / MW equivalence.

mod common;

use ppo_lab::mw::{
    bregman_check, exact_rkl_equals_mw, i_projection, kl_discrete, measure_alpha, regret_check,
    regret_check_prefix, run_exact_mw, ConvexFamilySpec, DiscreteDistribution,
};
use ppo_lab::policy::PolicyParams;
use ppo_lab::rng::Rng;

fn random_simplex(rng: &mut Rng, n: usize, floor: f64) -> DiscreteDistribution {
    let raw: Vec<f64> = (0..n).map(|_| rng.uniform01() + 1e-3).collect();
    let sum: f64 = raw.iter().sum();
    let free = 1.0 - floor * n as f64;
    let probs: Vec<f64> = raw.iter().map(|x| floor + free * x / sum).collect();
    let total: f64 = probs.iter().sum();
    DiscreteDistribution::new(probs.iter().map(|p| p / total).collect()).unwrap()
}

#[test]
fn bregman_inequality_on_floor_constrained_instances() {
    // 1000 randomized (p, q) instances, |X| in {2, 3}.
    let mut rng = Rng::new(31);
    for i in 0..1000 {
        let n = 2 + (i % 2);
        let floor = 0.02 + 0.1 * rng.uniform01();
        let family = ConvexFamilySpec::FloorConstrained { min_prob: floor };
        let p = random_simplex(&mut rng, n, floor);
        let q = random_simplex(&mut rng, n, 0.0);
        let check = bregman_check(&p, &q, &family, 1e-6).unwrap();
        assert!(
            check.holds,
            "instance {i}: lhs {} rhs {} (p={:?}, q={:?})",
            check.lhs,
            check.rhs,
            p.probs(),
            q.probs()
        );
    }
}

#[test]
fn water_filling_matches_grid_search_on_random_instances() {
    let mut rng = Rng::new(32);
    for _ in 0..40 {
        let floor = 0.05 + 0.1 * rng.uniform01();
        let family = ConvexFamilySpec::FloorConstrained { min_prob: floor };
        let q = random_simplex(&mut rng, 3, 0.0);
        let proj = i_projection(&q, &family).unwrap();

        // Brute-force grid at resolution 1e-3 over the constrained simplex.
        let res = 1e-3;
        let mut best_kl = f64::INFINITY;
        let mut best = vec![0.0; 3];
        let mut a = floor;
        while a <= 1.0 - 2.0 * floor + 1e-12 {
            let mut b = floor;
            while b <= 1.0 - a - floor + 1e-12 {
                let c = 1.0 - a - b;
                if c >= floor - 1e-12 {
                    let p = DiscreteDistribution::new(vec![a, b, c.max(floor)]).ok();
                    if let Some(p) = p {
                        let kl = kl_discrete(&p, &q).unwrap();
                        if kl < best_kl {
                            best_kl = kl;
                            best = p.probs().to_vec();
                        }
                    }
                }
                b += res;
            }
            a += res;
        }
        for (got, want) in proj.probs().iter().zip(&best) {
            assert!(
                (got - want).abs() < 2e-3,
                "projection {:?} vs grid {:?} (q = {:?}, floor = {floor})",
                proj.probs(),
                best,
                q.probs()
            );
        }
        // The exact projection's KL can only be lower.
        assert!(kl_discrete(&proj, &q).unwrap() <= best_kl + 1e-9);
    }
}

#[test]
fn projection_gap_is_maximized_at_a_vertex() {
    // The alpha gap functional is linear in p, so the grid never beats the
    // vertex set; verified rather than assumed.
    let mut rng = Rng::new(33);
    for _ in 0..25 {
        let family = ConvexFamilySpec::FullSimplex;
        let q = random_simplex(&mut rng, 3, 0.0);
        let proj = i_projection(&q, &family).unwrap();
        let mix: Vec<f64> = q
            .probs()
            .iter()
            .map(|p| 0.995 * p + 0.005 / 3.0)
            .collect();
        let approx = DiscreteDistribution::new(mix).unwrap();
        let with_grid = measure_alpha(&approx, &proj, &family, Some(5e-3)).unwrap();
        let vertices_only = measure_alpha(&approx, &proj, &family, None).unwrap();
        assert!((with_grid - vertices_only).abs() < 1e-9);
    }
}

#[test]
fn exact_mw_regret_holds_at_every_prefix_across_environments() {
    let mut rng = Rng::new(34);
    for n in [10usize, 50, 100] {
        for _ in 0..5 {
            // Random reward table in [0, 1] with a unique optimum.
            let mut rewards: Vec<f64> = (0..n).map(|_| rng.uniform01() * 0.8).collect();
            let opt = (rng.next_u64() % n as u64) as usize;
            rewards[opt] = 1.0;
            let (_, ledger) = run_exact_mw(&rewards, opt, 150, 1.0 / 3.0).unwrap();
            for k in 1..=ledger.entries.len() {
                let check = regret_check_prefix(&ledger, k);
                assert!(check.step_sizes_valid);
                assert!(check.holds, "n={n}, prefix {k}");
            }
            let full = regret_check(&ledger);
            assert!(full.rhs_simplified.is_some());
        }
    }
}

#[test]
fn rkl_ascent_reproduces_mw_target_on_random_instances() {
    // Smaller version of the acceptance sweep: 15 instances across sizes.
    let mut rng = Rng::new(35);
    for &n in &[3usize, 10, 100] {
        for _ in 0..5 {
            let logits: Vec<f64> = (0..n).map(|_| 2.0 * rng.uniform01() - 1.0).collect();
            let advantages: Vec<f64> = (0..n).map(|_| 2.0 * rng.uniform01() - 1.0).collect();
            let beta = 2.0 + 2.0 * rng.uniform01();
            let params = PolicyParams::Softmax { logits };
            let out = exact_rkl_equals_mw(&params, &advantages, beta).unwrap();
            assert!(out.linf_gap <= 1e-5, "n={n}: gap {}", out.linf_gap);
        }
    }
}
