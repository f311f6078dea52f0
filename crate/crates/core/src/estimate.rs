//! Shifted Monte-Carlo estimates of `p_a(s)^T u` from generative-model draws.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generative::{GenerativeModel, StreamId};
use crate::mdp::{QValues, Values};
use crate::scalar::{max_norm, Scalar};

/// Result of estimating one expectation `p^T u` from `num_samples` draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleEstimate<T = f64> {
    /// `raw_mean` minus the variance- and norm-dependent offset.
    pub shifted_value: T,
    pub raw_mean: T,
    pub empirical_variance: T,
    pub num_samples: u64,
    pub eta: T,
}

/// Downward offset `sqrt(2 eta var) + 4 eta^(3/4) |u| + (2/3) eta |u|`.
pub fn shift_offset<T: Scalar>(eta: T, variance: T, u_norm: T) -> T {
    let two = T::lit(2.0);
    (two * eta * variance).sqrt() + T::lit(4.0) * eta.powf(T::lit(0.75)) * u_norm + two / T::lit(3.0) * eta * u_norm
}

fn check_params<T: Scalar>(m: u64, eta: T) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    if !(eta >= T::zero()) || !eta.is_finite() {
        return Err(Error::invalid(format!("offset parameter {eta} must be a finite nonnegative number")));
    }
    Ok(())
}

fn estimate_pair<T: Scalar>(
    model: &GenerativeModel<T>,
    u: &[T],
    u_norm: T,
    pair: usize,
    m: u64,
    eta: T,
    stream: StreamId,
) -> Result<SampleEstimate<T>> {
    // Sums are taken relative to the first drawn value, which keeps a
    // constant `u` exact and the variance free of cancellation.
    let mut reference: Option<T> = None;
    let mut sum = T::zero();
    let mut sum_sq = T::zero();
    model.draw_counts(pair, stream, m, |state, count| {
        let value = u[state];
        let r = *reference.get_or_insert(value);
        let d = value - r;
        let c = T::from_u64(count).expect("count representable");
        sum = sum + c * d;
        sum_sq = sum_sq + c * d * d;
    })?;
    let n = T::from_u64(m).expect("sample size representable");
    let mean_shift = sum / n;
    let raw_mean = (reference.unwrap_or_else(T::zero) + mean_shift).max(-u_norm).min(u_norm);
    let empirical_variance = (sum_sq / n - mean_shift * mean_shift).max(T::zero());
    let shifted_value = if eta == T::zero() {
        raw_mean
    } else {
        raw_mean - shift_offset(eta, empirical_variance, u_norm)
    };
    Ok(SampleEstimate {
        shifted_value,
        raw_mean,
        empirical_variance,
        num_samples: m,
        eta,
    })
}

/// Estimates `p_a(s)^T u` for one pair from `m` draws with offset `eta`.
pub fn sample_dot<T: Scalar>(
    model: &GenerativeModel<T>,
    u: &Values<T>,
    pair: usize,
    m: u64,
    eta: T,
    stream: StreamId,
) -> Result<SampleEstimate<T>> {
    check_params(m, eta)?;
    model.shape().check_values(u)?;
    estimate_pair(model, u, max_norm(u), pair, m, eta, stream)
}

/// Per-pair estimates of `P u`, `m` draws each, all on substream `stream`.
///
/// Pairs are processed in parallel; each pair's draws depend only on the
/// model seed, the pair and `stream`, so the output is the same for any
/// thread count.
pub fn apx_utility_estimates<T: Scalar>(
    model: &GenerativeModel<T>,
    u: &Values<T>,
    m: u64,
    eta: T,
    stream: StreamId,
) -> Result<Vec<SampleEstimate<T>>> {
    check_params(m, eta)?;
    model.shape().check_values(u)?;
    let u_norm = max_norm(u);
    (0..model.a_tot())
        .into_par_iter()
        .with_min_len(32)
        .map(|pair| estimate_pair(model, u, u_norm, pair, m, eta, stream))
        .collect()
}

/// Shifted estimates of `P u` assembled into a state-action vector.
pub fn apx_utility<T: Scalar>(
    model: &GenerativeModel<T>,
    u: &Values<T>,
    m: u64,
    eta: T,
    stream: StreamId,
) -> Result<QValues<T>> {
    Ok(apx_utility_estimates(model, u, m, eta, stream)?
        .into_iter()
        .map(|e| e.shifted_value)
        .collect())
}
