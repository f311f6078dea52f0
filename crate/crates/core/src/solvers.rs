//! Outer loops: each phase halves the accuracy target `alpha` by running the
//! truncated inner loop from the previous phase's values.
//!
//! The variants differ only in how the offsets `x ~ P v_(k-1)` are obtained:
//! exactly from the matrix (offline), or from shifted generative-model
//! estimates with a worst-case (sample) or variance-aware
//! (problem-dependent) budget. Classic value iteration is the baseline.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::audit::{Auditor, EpochAudit};
use crate::engine::{truncated_vrvi, EngineOptions, EpochRecord};
use crate::error::{Error, Result};
use crate::estimate::apx_utility;
use crate::generative::{GenerativeModel, StreamId};
use crate::mdp::{
    bellman, exact_optimal_values, exact_policy_values, solve_policy_system, transition_product,
    value_iteration_steps, Instance, MdpShape, Policy, QValues, Values,
};
use crate::scalar::{max_norm_diff, Scalar};

/// Oracle tolerance used for audits unless configured otherwise.
pub const DEFAULT_ORACLE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Offline,
    Sample,
    ProblemDependent,
    ClassicVi,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Offline,
        Variant::Sample,
        Variant::ProblemDependent,
        Variant::ClassicVi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Offline => "offline",
            Variant::Sample => "sample",
            Variant::ProblemDependent => "problem_dependent",
            Variant::ClassicVi => "classic_vi",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offline" => Ok(Variant::Offline),
            "sample" => Ok(Variant::Sample),
            "problem_dependent" | "pd" => Ok(Variant::ProblemDependent),
            "classic_vi" => Ok(Variant::ClassicVi),
            other => Err(Error::config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub variant: Variant,
    /// Upper bound `V` on `||(I - gamma P*)^-1 sqrt(sigma_v*)||_inf`; required
    /// by the problem-dependent variant only.
    pub v_upper: Option<f64>,
    pub verify: bool,
    pub oracle_tol: f64,
}

impl SolveConfig {
    pub fn new(variant: Variant, epsilon: f64, delta: f64, seed: u64) -> Self {
        SolveConfig {
            epsilon,
            delta,
            seed,
            variant,
            v_upper: None,
            verify: false,
            oracle_tol: DEFAULT_ORACLE_TOL,
        }
    }

    pub fn with_v_upper(mut self, v: f64) -> Self {
        self.v_upper = Some(v);
        self
    }

    pub fn verified(mut self, verify: bool) -> Self {
        self.verify = verify;
        self
    }

    pub fn validate(&self, gamma: f64) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon {} must be positive", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta {} not in (0, 1)", self.delta)));
        }
        if !(self.oracle_tol > 0.0) {
            return Err(Error::config("oracle tolerance must be positive"));
        }
        match (self.variant, self.v_upper) {
            (Variant::ProblemDependent, None) => {
                Err(Error::config("problem-dependent variant needs v_upper"))
            }
            (Variant::ProblemDependent, Some(v)) => {
                let cap = max_v_upper(gamma);
                if !(v > 0.0 && v <= cap) {
                    Err(Error::config(format!("v_upper {v} must lie in (0, 3(1-gamma)^-1.5] = (0, {cap}]")))
                } else {
                    Ok(())
                }
            }
            (other, Some(_)) => Err(Error::config(format!("v_upper only applies to problem_dependent, not {other}"))),
            (_, None) => Ok(()),
        }
    }
}

/// Largest admissible `V`: `3 (1 - gamma)^-1.5`.
pub fn max_v_upper(gamma: f64) -> f64 {
    3.0 * (1.0 - gamma).powf(-1.5)
}

/// Number of halving phases `K = ceil(log2(1 / (epsilon (1 - gamma))))`,
/// zero when `epsilon >= 1 / (1 - gamma)`.
pub fn phase_count(gamma: f64, epsilon: f64) -> usize {
    let k = (1.0 / (epsilon * (1.0 - gamma))).log2().ceil();
    if k > 0.0 {
        k as usize
    } else {
        0
    }
}

/// `ln(8 a_tot K / delta)`, the log factor shared by the sampling budgets.
pub fn budget_log(a_tot: usize, phases: usize, delta: f64) -> f64 {
    (8.0 * a_tot as f64 * phases as f64 / delta).ln()
}

/// Worst-case per-pair offset budget for the phase that starts at accuracy
/// `alpha_prev`: `ceil(10^4 (1-gamma)^-3 max(1-gamma, alpha_prev^-2) ln(8 a_tot K / delta))`.
pub fn sample_budget(gamma: f64, alpha_prev: f64, a_tot: usize, phases: usize, delta: f64) -> u64 {
    let h = 1.0 - gamma;
    (1e4 * h.powi(-3) * h.max(alpha_prev.powi(-2)) * budget_log(a_tot, phases, delta)).ceil() as u64
}

/// Variance-aware budget `ceil(1024 alpha_prev^-2 V^2 ln(8 a_tot K / delta))`.
pub fn variance_budget(alpha_prev: f64, v_upper: f64, a_tot: usize, phases: usize, delta: f64) -> u64 {
    (1024.0 * alpha_prev.powi(-2) * v_upper * v_upper * budget_log(a_tot, phases, delta)).ceil() as u64
}

/// Offset parameter `eta = ln(8 a_tot K / delta) / N`.
pub fn offset_eta(samples: u64, a_tot: usize, phases: usize, delta: f64) -> f64 {
    budget_log(a_tot, phases, delta) / samples as f64
}

/// Phases `k` (1-based) with `k < ceil(log2(128 (1-gamma)^-5 / V^3))` use the
/// worst-case budget. The threshold is clamped to `[0, K]`.
pub fn burn_in_threshold(gamma: f64, v_upper: f64, phases: usize) -> usize {
    let t = (128.0 * (1.0 - gamma).powi(-5) / v_upper.powi(3)).log2().ceil();
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(phases)
    }
}

/// How a phase obtained its offsets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhaseBudget {
    /// `x = P v` computed from the explicit matrix.
    Exact,
    /// `x` estimated with `samples` draws per pair and offset `eta`.
    Sampled { samples: u64, eta: f64, burn_in: bool },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseAudit {
    /// `||v* - v_k||_inf`.
    pub value_gap: f64,
    /// `value_gap <= alpha_k + oracle_tol`.
    pub within_alpha: bool,
    /// `v_k <= v* + oracle_tol`.
    pub underestimate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRecord {
    /// 1-based phase index.
    pub k: usize,
    /// Accuracy target after this phase.
    pub alpha: f64,
    pub budget: PhaseBudget,
    /// Offset queries plus inner-loop queries.
    pub queries: u64,
    /// `||v_k - v_(k-1)||_inf`.
    pub step_norm: f64,
    pub epochs: Vec<EpochRecord>,
    pub audit: Option<PhaseAudit>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinalAudit {
    pub value_gap: f64,
    pub policy_gap: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport<T = f64> {
    pub variant: Variant,
    pub values: Values<T>,
    pub policy: Policy,
    pub total_queries: u64,
    /// Explicit `P`-times-vector products.
    pub matrix_products: u64,
    pub wall_time: f64,
    pub phases: Vec<PhaseRecord>,
    pub audit: Option<FinalAudit>,
    pub note: Option<String>,
}

impl<T> SolveReport<T> {
    pub fn epoch_audits(&self) -> impl Iterator<Item = &EpochAudit> {
        self.phases.iter().flat_map(|p| p.epochs.iter().filter_map(|e| e.audit.as_ref()))
    }

    /// Whether every audited epoch kept the monotone-underestimate invariants.
    pub fn invariants_hold(&self) -> bool {
        self.epoch_audits().all(EpochAudit::invariants_hold)
            && self.phases.iter().filter_map(|p| p.audit).all(|a| a.underestimate)
    }

    /// Whether every audited phase met its halving target.
    pub fn halving_holds(&self) -> bool {
        self.phases.iter().filter_map(|p| p.audit).all(|a| a.within_alpha)
    }
}

/// Runs the configured variant against an explicit instance, building the
/// generative model and (with `verify`) the auditor as needed.
pub fn solve<T: Scalar>(inst: &Instance<T>, config: &SolveConfig) -> Result<SolveReport<T>> {
    match config.variant {
        Variant::Offline => solve_offline(inst, config),
        Variant::ClassicVi => classic_vi(inst, config),
        Variant::Sample | Variant::ProblemDependent => {
            config.validate(inst.gamma().as_f64())?;
            let auditor = if config.verify {
                Some(Auditor::new(inst, T::lit(config.oracle_tol))?)
            } else {
                None
            };
            let model = GenerativeModel::build(inst, config.seed);
            if config.variant == Variant::Sample {
                solve_sample(&model, config, auditor.as_ref())
            } else {
                solve_problem_dependent(&model, config, auditor.as_ref())
            }
        }
    }
}

fn expect_variant(config: &SolveConfig, want: Variant) -> Result<()> {
    if config.variant != want {
        return Err(Error::config(format!("{} solver given a {} config", want, config.variant)));
    }
    Ok(())
}

/// Offsets for one phase plus how they were obtained.
struct Offsets<T> {
    x: QValues<T>,
    budget: PhaseBudget,
    queries: u64,
}

fn halving_loop<T: Scalar>(
    model: &GenerativeModel<T>,
    config: &SolveConfig,
    auditor: Option<&Auditor<'_, T>>,
    inner_delta_share: f64,
    mut offsets: impl FnMut(usize, usize, f64, &Values<T>) -> Result<Offsets<T>>,
) -> Result<SolveReport<T>> {
    let start = Instant::now();
    let shape = model.shape();
    let gamma = shape.gamma().as_f64();
    let phases = phase_count(gamma, config.epsilon);
    if phases == 0 {
        return Ok(trivial_report(shape, config, start));
    }
    let inner_delta = config.delta / phases as f64 * inner_delta_share;
    let horizon = T::one() / (T::one() - shape.gamma());
    let mut v = Values::zeros(shape.num_states());
    let mut pi = Policy::first_actions(shape.num_states());
    let mut alpha_prev = horizon;
    let mut records = Vec::with_capacity(phases);
    let mut matrix_products = 0;

    for k in 1..=phases {
        let alpha = alpha_prev / T::lit(2.0);
        let off = offsets(k, phases, alpha_prev.as_f64(), &v)?;
        if off.budget == PhaseBudget::Exact {
            matrix_products += 1;
        }
        let out = truncated_vrvi(
            model,
            &v,
            &pi,
            &off.x,
            alpha_prev,
            inner_delta,
            EngineOptions {
                phase: k as u32,
                auditor,
            },
        )?;
        let step_norm = max_norm_diff(&out.values, &v).as_f64();
        let audit = auditor.map(|a| {
            let tol = a.oracle_tol();
            let value_gap = a.value_gap(&out.values);
            PhaseAudit {
                value_gap: value_gap.as_f64(),
                within_alpha: value_gap <= alpha + tol,
                underestimate: out.values.iter().zip(a.v_star().iter()).all(|(&x, &y)| x <= y + tol),
            }
        });
        records.push(PhaseRecord {
            k,
            alpha: alpha.as_f64(),
            budget: off.budget,
            queries: off.queries + out.trace.total_queries(),
            step_norm,
            epochs: out.trace.epochs,
            audit,
        });
        v = out.values;
        pi = out.policy;
        alpha_prev = alpha;
    }

    let audit = auditor.map(|a| final_audit(a, &v, &pi)).transpose()?;
    Ok(SolveReport {
        variant: config.variant,
        total_queries: records.iter().map(|r| r.queries).sum(),
        values: v,
        policy: pi,
        matrix_products,
        wall_time: start.elapsed().as_secs_f64(),
        phases: records,
        audit,
        note: None,
    })
}

fn trivial_report<T: Scalar>(shape: &MdpShape<T>, config: &SolveConfig, start: Instant) -> SolveReport<T> {
    // Greedy with respect to v = 0 only needs the rewards.
    let (_, policy) = shape.greedy(shape.rewards());
    SolveReport {
        variant: config.variant,
        values: Values::zeros(shape.num_states()),
        policy,
        total_queries: 0,
        matrix_products: 0,
        wall_time: start.elapsed().as_secs_f64(),
        phases: Vec::new(),
        audit: None,
        note: Some(format!(
            "epsilon {} >= 1/(1-gamma): zero values are already epsilon-optimal",
            config.epsilon
        )),
    }
}

fn final_audit<T: Scalar>(auditor: &Auditor<'_, T>, v: &Values<T>, pi: &Policy) -> Result<FinalAudit> {
    let v_pi = exact_policy_values(auditor.instance(), pi, auditor.oracle_tol())?;
    Ok(FinalAudit {
        value_gap: auditor.value_gap(v).as_f64(),
        policy_gap: max_norm_diff(auditor.v_star(), &v_pi).as_f64(),
    })
}

/// Offline variant: exact offsets `x = P v_(k-1)` each phase, inner loop with
/// failure budget `delta / K`.
pub fn solve_offline<T: Scalar>(inst: &Instance<T>, config: &SolveConfig) -> Result<SolveReport<T>> {
    expect_variant(config, Variant::Offline)?;
    config.validate(inst.gamma().as_f64())?;
    let auditor = if config.verify {
        Some(Auditor::new(inst, T::lit(config.oracle_tol))?)
    } else {
        None
    };
    let model = GenerativeModel::build(inst, config.seed);
    halving_loop(&model, config, auditor.as_ref(), 1.0, |_, _, _, v| {
        Ok(Offsets {
            x: transition_product(inst, v)?,
            budget: PhaseBudget::Exact,
            queries: 0,
        })
    })
}

fn sampled_offsets<T: Scalar>(
    model: &GenerativeModel<T>,
    k: usize,
    phases: usize,
    samples: u64,
    burn_in: bool,
    delta: f64,
    v: &Values<T>,
) -> Result<Offsets<T>> {
    let a_tot = model.a_tot();
    let eta = offset_eta(samples, a_tot, phases, delta);
    let x = apx_utility(model, v, samples, T::lit(eta), StreamId::offsets(k as u32))?;
    Ok(Offsets {
        x,
        budget: PhaseBudget::Sampled { samples, eta, burn_in },
        queries: samples * a_tot as u64,
    })
}

fn require_auditor<T>(config: &SolveConfig, auditor: Option<&Auditor<'_, T>>) -> Result<()> {
    if config.verify && auditor.is_none() {
        return Err(Error::config("verify requested but no auditor supplied"));
    }
    Ok(())
}

/// Sample-setting variant. Reads the MDP only through `model`; the auditor,
/// when present, is used for verification and never feeds the iterates.
pub fn solve_sample<T: Scalar>(
    model: &GenerativeModel<T>,
    config: &SolveConfig,
    auditor: Option<&Auditor<'_, T>>,
) -> Result<SolveReport<T>> {
    expect_variant(config, Variant::Sample)?;
    let gamma = model.shape().gamma().as_f64();
    config.validate(gamma)?;
    require_auditor(config, auditor)?;
    let a_tot = model.a_tot();
    halving_loop(model, config, auditor, 0.5, |k, phases, alpha_prev, v| {
        let n = sample_budget(gamma, alpha_prev, a_tot, phases, config.delta);
        sampled_offsets(model, k, phases, n, true, config.delta, v)
    })
}

/// Problem-dependent variant: worst-case budgets during burn-in, then
/// budgets scaled by `V^2`.
pub fn solve_problem_dependent<T: Scalar>(
    model: &GenerativeModel<T>,
    config: &SolveConfig,
    auditor: Option<&Auditor<'_, T>>,
) -> Result<SolveReport<T>> {
    expect_variant(config, Variant::ProblemDependent)?;
    let gamma = model.shape().gamma().as_f64();
    config.validate(gamma)?;
    require_auditor(config, auditor)?;
    let v_upper = config.v_upper.expect("validated");
    let a_tot = model.a_tot();
    halving_loop(model, config, auditor, 0.5, |k, phases, alpha_prev, v| {
        let burn_in = k < burn_in_threshold(gamma, v_upper, phases);
        let n = if burn_in {
            sample_budget(gamma, alpha_prev, a_tot, phases, config.delta)
        } else {
            variance_budget(alpha_prev, v_upper, a_tot, phases, config.delta)
        };
        sampled_offsets(model, k, phases, n, burn_in, config.delta, v)
    })
}

/// Classic value iteration from zero for the a-priori number of steps that
/// makes the values epsilon-optimal. The returned policy is greedy for the
/// final values, which costs one more product.
pub fn classic_vi<T: Scalar>(inst: &Instance<T>, config: &SolveConfig) -> Result<SolveReport<T>> {
    expect_variant(config, Variant::ClassicVi)?;
    let gamma = inst.gamma().as_f64();
    config.validate(gamma)?;
    let start = Instant::now();
    let auditor = if config.verify {
        Some(Auditor::new(inst, T::lit(config.oracle_tol))?)
    } else {
        None
    };
    let steps = value_iteration_steps(gamma, config.epsilon);
    let mut v = Values::zeros(inst.num_states());
    let mut records = Vec::with_capacity(steps);
    for k in 1..=steps {
        let (next, _) = bellman(inst, &v)?;
        let audit = auditor.as_ref().map(|a| {
            let tol = a.oracle_tol();
            let bound = gamma.powi(k as i32) / (1.0 - gamma);
            let gap = a.value_gap(&next);
            PhaseAudit {
                value_gap: gap.as_f64(),
                within_alpha: gap.as_f64() <= bound + tol.as_f64(),
                underestimate: next.iter().zip(a.v_star().iter()).all(|(&x, &y)| x <= y + tol),
            }
        });
        records.push(PhaseRecord {
            k,
            alpha: gamma.powi(k as i32) / (1.0 - gamma),
            budget: PhaseBudget::Exact,
            queries: 0,
            step_norm: max_norm_diff(&next, &v).as_f64(),
            epochs: Vec::new(),
            audit,
        });
        v = next;
    }
    let (_, policy) = bellman(inst, &v)?;
    let audit = auditor.as_ref().map(|a| final_audit(a, &v, &policy)).transpose()?;
    Ok(SolveReport {
        variant: Variant::ClassicVi,
        values: v,
        policy,
        total_queries: 0,
        matrix_products: steps as u64 + 1,
        wall_time: start.elapsed().as_secs_f64(),
        phases: records,
        audit,
        note: None,
    })
}

/// Exact variance functional and the cheap upper bounds on it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VUpperEstimate {
    /// `||(I - gamma P*)^-1 sqrt(sigma_v*)||_inf`.
    pub exact: f64,
    /// `max v* - min v*`.
    pub range: f64,
    /// `range / (1 - gamma)`.
    pub range_bound: f64,
    /// `3 (1 - gamma)^-1.5`.
    pub horizon_bound: f64,
    /// `sqrt((1 + gamma) / (gamma^2 (1 - gamma)^3))`.
    pub variance_bound: f64,
}

impl VUpperEstimate {
    /// `min(3 (1-gamma)^-1.5, range / (1-gamma))`.
    pub fn cheap_bound(&self) -> f64 {
        self.horizon_bound.min(self.range_bound)
    }
}

/// Computes `sigma_v* = P (v*)^2 - (P v*)^2` on the optimal policy's pairs and
/// solves `(I - gamma P*) y = sqrt(sigma_v*)`. Needs the explicit matrix.
pub fn estimate_v_upper<T: Scalar>(inst: &Instance<T>, oracle_tol: T) -> Result<VUpperEstimate> {
    let (v_star, pi_star) = exact_optimal_values(inst, oracle_tol)?;
    let shape = inst.shape();
    let sq: Values<T> = v_star.iter().map(|&x| x * x).collect();
    let sigma_sqrt: Vec<T> = (0..inst.num_states())
        .map(|s| {
            let row = inst.row(shape.pair(s, pi_star[s]));
            let m = row.dot(&v_star);
            (row.dot(&sq) - m * m).max(T::zero()).sqrt()
        })
        .collect();
    let y = solve_policy_system(inst, &pi_star, &sigma_sqrt, oracle_tol)?;
    let gamma = inst.gamma().as_f64();
    let hi = v_star.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let lo = v_star.iter().fold(T::infinity(), |m, &x| m.min(x));
    let range = (hi - lo).as_f64();
    Ok(VUpperEstimate {
        exact: y.max_norm().as_f64(),
        range,
        range_bound: range / (1.0 - gamma),
        horizon_bound: max_v_upper(gamma),
        variance_bound: ((1.0 + gamma) / (gamma * gamma * (1.0 - gamma).powi(3))).sqrt(),
    })
}
