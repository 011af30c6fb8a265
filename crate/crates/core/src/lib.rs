//! A small laboratory for studying PPO-style policy optimization on synthetic
//! bandit tasks.
//!
//! The crate provides exact log-densities, score functions and analytic KL
//! divergences for Gaussian, Beta and Softmax policies ([`dist`], [`policy`]),
//! the clipped / forward-KL / reverse-KL surrogate objectives with their exact
//! sample-based gradients ([`surrogate`]), a seeded, bit-reproducible PPO
//! training loop ([`trainer`], [`rng`]), the constructed bandit environments
//! the experiments run on ([`envs`]), and numerical machinery for the
//! mirror-descent view of KL-regularized updates: multiplicative weights,
//! information projections, Fisher/KL Taylor checks and regret ledgers
//! ([`mw`]).

pub mod dist;
pub mod envs;
pub mod error;
pub mod mw;
pub mod policy;
pub mod rng;
pub mod surrogate;
pub mod trainer;

pub use error::{Error, Result};
