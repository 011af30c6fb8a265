//! Library half of the `ppo-lab` command-line tool.
//!
//! Everything the binary does is callable from here, which is also how the
//! acceptance suite drives the experiments without going through a process
//! boundary.

pub mod config;
pub mod diagnose;
pub mod experiments;
pub mod gradcheck;
pub mod output;
pub mod regret;
pub mod svg;
pub mod sweep;

/// Wilson score interval at 95% confidence for a binomial fraction.
pub fn wilson_interval(successes: usize, total: usize) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    if total == 0 {
        return (0.0, 1.0);
    }
    let n = total as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (Z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}
