//! Shared helpers for the integration suites.

/// Abramowitz-Stegun 7.1.26 rational approximation, |error| < 1.5e-7.
/// Plenty for goodness-of-fit thresholds at the 1e-3 scale.
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Two-sided Kolmogorov statistic of sorted samples against a CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let c = cdf(x);
        ks = ks.max((((i + 1) as f64) / n - c).abs());
        ks = ks.max((c - (i as f64) / n).abs());
    }
    ks
}

/// Kolmogorov critical value at significance 0.001 for large n.
pub fn ks_critical(n: usize) -> f64 {
    // sqrt(ln(2/alpha) / 2) / sqrt(n) with alpha = 0.001.
    1.949_474 / (n as f64).sqrt()
}

/// Composite Simpson integration on [lo, hi] with `panels` even panels.
pub fn simpson(lo: f64, hi: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = if panels % 2 == 0 { panels } else { panels + 1 };
    let h = (hi - lo) / n as f64;
    let mut total = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        total += w * f(lo + i as f64 * h);
    }
    total * h / 3.0
}

/// Central-difference gradient of a scalar function of a raw vector.
pub fn central_diff(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    for j in 0..x.len() {
        let mut up = x.to_vec();
        up[j] += h;
        let mut down = x.to_vec();
        down[j] -= h;
        grad[j] = (f(&up) - f(&down)) / (2.0 * h);
    }
    grad
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
