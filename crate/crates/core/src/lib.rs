//! Dubins car tracking and unexpected-obstacle avoidance with two control
//! stacks: flatness-based feedback with an intelligent proportional law
//! (`heol`) and model-free predictive control (`mfpc`).
//!
//! The plant is `x' = u1 cos u2`, `y' = u1 (1 + p) sin u2`, integrated with
//! explicit Euler at the sampling period. [`sim::run_scenario`] wires the
//! pieces into the closed loop; [`sweep::run_sweep`] repeats it over seeded
//! variations.

// Negated float comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod avoidance;
pub mod emit;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod heol;
pub mod mfpc;
pub mod model;
pub mod reference;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod sweep;

pub use error::{Error, Result};
