//! The truncated variance-reduced inner loop.
//!
//! Starting from values `v0` that underestimate `v*` by at most `alpha`, and
//! offsets `x` underestimating `P v0`, the loop runs `L` epochs of
//! approximate value iteration. Each epoch moves every coordinate up by at
//! most `(1 - gamma) alpha` and never down, and refreshes a running estimate
//! `g` of `P (v - v0)` by sampling only the last change `v_l - v_(l-1)`.
//! Because the changes are truncated, those samples have small range, which
//! is what keeps the per-epoch sample size `M` proportional to `L`.

use crate::audit::{Auditor, EpochAudit, SUB_BELLMAN_SLACK};
use crate::error::{Error, Result};
use crate::estimate::apx_utility;
use crate::generative::{GenerativeModel, StreamId};
use crate::mdp::{Policy, QValues, Values};
use crate::scalar::Scalar;

/// Epoch count `L` and per-pair samples per epoch `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub epochs: usize,
    pub samples: u64,
}

/// `L = ceil(ln(8) / (1 - gamma))` and `M = ceil(L * 2^8 * ln(2 a_tot / delta))`.
pub fn schedule(gamma: f64, delta: f64, a_tot: usize) -> Result<Schedule> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma {gamma} not in (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta {delta} not in (0, 1)")));
    }
    if a_tot == 0 {
        return Err(Error::invalid("no state-action pairs"));
    }
    let epochs = (8f64.ln() / (1.0 - gamma)).ceil() as usize;
    let samples = (epochs as f64 * 256.0 * (2.0 * a_tot as f64 / delta).ln()).ceil() as u64;
    Ok(Schedule { epochs, samples })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// `||v_l - v_(l-1)||_inf`.
    pub step_norm: f64,
    /// Generative-model queries spent in this epoch.
    pub queries: u64,
    pub audit: Option<EpochAudit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochTrace {
    pub schedule: Schedule,
    pub epochs: Vec<EpochRecord>,
}

impl EpochTrace {
    pub fn total_queries(&self) -> u64 {
        self.epochs.iter().map(|e| e.queries).sum()
    }
}

#[derive(Clone, Debug)]
pub struct EngineOutput<T> {
    pub values: Values<T>,
    pub policy: Policy,
    pub trace: EpochTrace,
}

/// Per-call context: which phase the call belongs to (selects the random
/// substreams) and an optional auditor.
#[derive(Clone, Copy, Default)]
pub struct EngineOptions<'a, T> {
    pub phase: u32,
    pub auditor: Option<&'a Auditor<'a, T>>,
}

/// Runs the truncated inner loop.
///
/// `x` must be an entrywise underestimate of `P v0`; that cannot be checked
/// without the explicit matrix and is the caller's contract. With an
/// auditor, `v0 <= T_pi0(v0)` is checked up front and every epoch is audited.
pub fn truncated_vrvi<T: Scalar>(
    model: &GenerativeModel<T>,
    v0: &Values<T>,
    pi0: &Policy,
    x: &QValues<T>,
    alpha: T,
    delta: f64,
    options: EngineOptions<'_, T>,
) -> Result<EngineOutput<T>> {
    let shape = model.shape();
    let gamma = shape.gamma();
    let a_tot = shape.a_tot();
    shape.check_values(v0)?;
    shape.check_policy(pi0)?;
    x.check(a_tot)?;
    let horizon = T::one() / (T::one() - gamma);
    if !(alpha >= T::zero() && alpha <= horizon) {
        return Err(Error::invalid(format!(
            "alpha {alpha} outside [0, 1/(1 - gamma)] = [0, {horizon}]"
        )));
    }
    let sched = schedule(gamma.as_f64(), delta, a_tot)?;
    if let Some(auditor) = options.auditor {
        if !auditor.is_sub_bellman(pi0, v0)? {
            return Err(Error::invalid(format!(
                "initial values violate v0 <= T_pi0(v0) (slack {SUB_BELLMAN_SLACK:e})"
            )));
        }
    }

    let band = (T::one() - gamma) * alpha;
    let g_shift = band / T::lit(8.0);
    let rewards = shape.rewards();
    let mut v = v0.clone();
    let mut pi = pi0.clone();
    let mut g = QValues::zeros(a_tot);
    let mut g_hat = QValues::zeros(a_tot);
    let mut records = Vec::with_capacity(sched.epochs);

    for epoch in 0..sched.epochs {
        let q: Vec<T> = (0..a_tot)
            .map(|p| rewards[p] + gamma * (x[p] + g_hat[p]))
            .collect();
        let (best, argmax) = shape.greedy(&q);
        let v_prev = v.clone();
        for i in 0..v.len() {
            let candidate = best[i].min(v_prev[i] + band);
            if candidate >= v[i] {
                v[i] = candidate;
                pi[i] = argmax[i];
            }
        }

        let change: Values<T> = v.iter().zip(v_prev.iter()).map(|(&a, &b)| a - b).collect();
        let stream = StreamId::epoch(options.phase, epoch as u32);
        let delta_est = apx_utility(model, &change, sched.samples, T::zero(), stream)?;
        for p in 0..a_tot {
            g[p] = g[p] + delta_est[p];
            g_hat[p] = g[p] - g_shift;
        }

        let audit = match options.auditor {
            Some(auditor) => Some(auditor.check_epoch(&v_prev, &v, &pi, band, v0, &g)?),
            None => None,
        };
        records.push(EpochRecord {
            epoch: epoch + 1,
            step_norm: change.max_norm().as_f64(),
            queries: sched.samples * a_tot as u64,
            audit,
        });
    }

    Ok(EngineOutput {
        values: v,
        policy: pi,
        trace: EpochTrace {
            schedule: sched,
            epochs: records,
        },
    })
}
