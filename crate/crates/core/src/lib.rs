//! Truncated variance-reduced value iteration for discounted MDPs.
//!
//! The crate is generic over the floating-point scalar ([`Scalar`]); the
//! aliases below fix it to `f64`, which is what the solvers are tuned for.
//!
//! * [`mdp`]: instances, Bellman operators, truncation and exact oracles.
//! * [`generative`]: the sampling oracle with O(1) draws and query counting.
//! * [`estimate`]: shifted Monte-Carlo estimates of `p^T u` and `P u`.
//! * [`audit`]: oracle-backed invariant checks for verified runs.
//! * [`engine`]: the truncated, monotone inner loop.
//! * [`solvers`]: offline, sample-setting and problem-dependent outer loops,
//!   plus classic value iteration.
//! * [`instances`]: instance generators and the on-disk text format.

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod engine;
pub mod error;
pub mod estimate;
pub mod generative;
pub mod instances;
pub mod mdp;
pub mod scalar;
pub mod solvers;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DmdpInstance = mdp::Instance<f64>;
pub type ValueVector = mdp::Values<f64>;
pub type QVector = mdp::QValues<f64>;
pub type Policy = mdp::Policy;
pub type GenerativeModel = generative::GenerativeModel<f64>;
pub type SampleEstimate = estimate::SampleEstimate<f64>;
pub type SolveReport = solvers::SolveReport<f64>;
pub type Auditor<'a> = audit::Auditor<'a, f64>;
