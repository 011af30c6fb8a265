//! Seeded random source and samplers.
//!
//! Everything random in the lab flows through [`Rng`], a hand-rolled
//! xoshiro256++ generator seeded via splitmix64 (both taken from their
//! published recurrences). No platform- or library-dependent code touches the
//! stream, so a given seed produces the same draw sequence everywhere, and
//! every experiment is bit-reproducible from its master seed.
//!
//! Parallel sweeps derive one independent stream per run with
//! [`derive_stream`], a pure function of the master seed and the run index.

use crate::error::{Error, Result};

/// Beta draws are clamped this far inside the open unit interval so that
/// log-densities stay finite when a draw lands numerically on a boundary.
pub const BETA_BOUNDARY_CLAMP: f64 = 1e-8;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for stream `index` of a sweep rooted at `master_seed`.
///
/// Pure function: runs can be scheduled in any order, on any number of
/// threads, and still see exactly the stream assigned to their index.
pub fn derive_stream(master_seed: u64, index: u64) -> u64 {
    let mut s = master_seed;
    let mixed_master = splitmix64(&mut s);
    let mut t = mixed_master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(&mut t)
}

/// Deterministic xoshiro256++ stream.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        Rng {
            s: [
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
            ],
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms.
    pub fn std_normal(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform01();
        let u2 = self.uniform01();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Draw from `N(mu, sigma^2)`.
    pub fn sample_normal(&mut self, mu: f64, sigma: f64) -> Result<f64> {
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "normal requires finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
            )));
        }
        Ok(mu + sigma * self.std_normal())
    }

    /// Gamma(shape, 1) via the Marsaglia-Tsang squeeze, valid for shape >= 1.
    fn sample_gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape >= 1.0);
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.std_normal();
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u = self.uniform01();
            if u < 1.0 - 0.0331 * x.powi(4) {
                return d * v;
            }
            if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Draw from Beta(alpha, beta) with both shapes >= 1, clamped to
    /// `[BETA_BOUNDARY_CLAMP, 1 - BETA_BOUNDARY_CLAMP]`.
    pub fn sample_beta(&mut self, alpha: f64, beta: f64) -> Result<f64> {
        if !(alpha >= 1.0) || !(beta >= 1.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "beta sampler requires alpha, beta >= 1, got alpha={alpha}, beta={beta}"
            )));
        }
        let ga = self.sample_gamma(alpha);
        let gb = self.sample_gamma(beta);
        let x = ga / (ga + gb);
        Ok(x.clamp(BETA_BOUNDARY_CLAMP, 1.0 - BETA_BOUNDARY_CLAMP))
    }

    /// Inverse-CDF draw from a probability vector.
    pub fn sample_categorical(&mut self, probs: &[f64]) -> Result<usize> {
        validate_probs(probs)?;
        let u = self.uniform01();
        let mut cum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            cum += p;
            if u < cum {
                return Ok(i);
            }
        }
        // Rounding left u just past the accumulated sum; return the last
        // index that carries mass.
        Ok(probs
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("validated vector has positive mass"))
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

pub(crate) fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidParameter("empty probability vector".into()));
    }
    let mut sum = 0.0;
    for &p in probs {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "probability entry {p} is negative or non-finite"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "probability vector sums to {sum}, expected 1"
        )));
    }
    Ok(())
}
