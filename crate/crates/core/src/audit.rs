//! Oracle-backed invariant checks used when a solve runs with verification.
//!
//! The auditor owns the explicit instance and the exact optimal values. It is
//! kept apart from the solvers so that sample-setting code paths only see the
//! generative model; the auditor's transition reads are verification cost,
//! not algorithm cost.

use crate::error::Result;
use crate::mdp::{bellman_policy, exact_optimal_values, transition_product, Instance, Policy, Values};
use crate::scalar::{max_norm_diff, Scalar};

/// Slack allowed on `v <= T_pi(v)` for floating-point evaluation.
pub const SUB_BELLMAN_SLACK: f64 = 1e-9;

/// Invariant outcomes for one inner-loop epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochAudit {
    /// `v` did not decrease anywhere.
    pub nondecreasing: bool,
    /// Every coordinate moved by at most `(1 - gamma) alpha`.
    pub step_within_band: bool,
    /// `v <= v* + oracle_tol`.
    pub below_optimal: bool,
    /// `v <= T_pi(v) + SUB_BELLMAN_SLACK`.
    pub sub_bellman: bool,
    /// `max |g - P (v - v_0)|` over pairs after this epoch's update.
    pub max_drift: f64,
    /// `max_drift <= (1 - gamma) alpha / 8`.
    pub drift_within_bound: bool,
}

impl EpochAudit {
    /// The almost-sure monotone-underestimate invariants (drift excluded,
    /// since that bound is probabilistic).
    pub fn invariants_hold(&self) -> bool {
        self.nondecreasing && self.step_within_band && self.below_optimal && self.sub_bellman
    }
}

pub struct Auditor<'a, T = f64> {
    inst: &'a Instance<T>,
    v_star: Values<T>,
    oracle_tol: T,
}

impl<'a, T: Scalar> Auditor<'a, T> {
    /// Computes `v*` to within `oracle_tol`.
    pub fn new(inst: &'a Instance<T>, oracle_tol: T) -> Result<Self> {
        let (v_star, _) = exact_optimal_values(inst, oracle_tol)?;
        Ok(Auditor {
            inst,
            v_star,
            oracle_tol,
        })
    }

    pub fn instance(&self) -> &'a Instance<T> {
        self.inst
    }

    pub fn v_star(&self) -> &Values<T> {
        &self.v_star
    }

    pub fn oracle_tol(&self) -> T {
        self.oracle_tol
    }

    /// Whether `v <= T_pi(v)` up to [`SUB_BELLMAN_SLACK`].
    pub fn is_sub_bellman(&self, pi: &Policy, v: &Values<T>) -> Result<bool> {
        let tv = bellman_policy(self.inst, pi, v)?;
        let slack = T::lit(SUB_BELLMAN_SLACK);
        Ok(v.iter().zip(tv.iter()).all(|(&a, &b)| a <= b + slack))
    }

    /// `||v* - v||_inf`.
    pub fn value_gap(&self, v: &Values<T>) -> T {
        max_norm_diff(&self.v_star, v)
    }

    /// Checks one epoch of the inner loop.
    #[allow(clippy::too_many_arguments)]
    pub fn check_epoch(
        &self,
        v_prev: &Values<T>,
        v: &Values<T>,
        pi: &Policy,
        band: T,
        v_start: &Values<T>,
        g: &[T],
    ) -> Result<EpochAudit> {
        let nondecreasing = v.iter().zip(v_prev.iter()).all(|(a, b)| a >= b);
        let step_within_band = v.iter().zip(v_prev.iter()).all(|(&a, &b)| a <= b + band);
        let below_optimal = v
            .iter()
            .zip(self.v_star.iter())
            .all(|(&a, &b)| a <= b + self.oracle_tol);
        let sub_bellman = self.is_sub_bellman(pi, v)?;
        let moved: Values<T> = v.iter().zip(v_start.iter()).map(|(&a, &b)| a - b).collect();
        let exact = transition_product(self.inst, &moved)?;
        let max_drift = max_norm_diff(g, &exact).as_f64();
        Ok(EpochAudit {
            nondecreasing,
            step_within_band,
            below_optimal,
            sub_bellman,
            max_drift,
            drift_within_bound: max_drift <= (band / T::lit(8.0)).as_f64(),
        })
    }
}
