use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use super::vectors::{Policy, Values};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute tolerance on each transition row summing to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Knobs for instance validation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ValidationOptions {
    /// Accept rewards outside `[0, 1]`. The solvers' guarantees assume bounded
    /// rewards, so this is for experimentation only.
    pub allow_unbounded_rewards: bool,
}

/// One action of a state: its reward and sparse successor distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Action<T = f64> {
    pub reward: T,
    pub transitions: Vec<(usize, T)>,
}

impl<T> Action<T> {
    pub fn new(reward: T, transitions: Vec<(usize, T)>) -> Self {
        Action {
            reward,
            transitions,
        }
    }
}

/// Everything about an MDP except its transition probabilities: the state and
/// action layout, rewards and discount.
///
/// State-action pairs are numbered consecutively, state by state, so the
/// actions of state `s` occupy pair indices `actions(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpShape<T = f64> {
    num_states: usize,
    action_offsets: Vec<usize>,
    rewards: Vec<T>,
    gamma: T,
}

impl<T: Scalar> MdpShape<T> {
    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Total number of state-action pairs.
    #[inline]
    pub fn a_tot(&self) -> usize {
        self.rewards.len()
    }

    #[inline]
    pub fn gamma(&self) -> T {
        self.gamma
    }

    #[inline]
    pub fn actions(&self, state: usize) -> Range<usize> {
        self.action_offsets[state]..self.action_offsets[state + 1]
    }

    #[inline]
    pub fn num_actions(&self, state: usize) -> usize {
        self.action_offsets[state + 1] - self.action_offsets[state]
    }

    /// Global pair index of `(state, action)`.
    #[inline]
    pub fn pair(&self, state: usize, action: usize) -> usize {
        debug_assert!(action < self.num_actions(state));
        self.action_offsets[state] + action
    }

    /// State owning a pair index.
    pub fn state_of(&self, pair: usize) -> usize {
        self.action_offsets.partition_point(|&o| o <= pair) - 1
    }

    #[inline]
    pub fn reward(&self, pair: usize) -> T {
        self.rewards[pair]
    }

    pub fn rewards(&self) -> &[T] {
        &self.rewards
    }

    pub fn check_values(&self, v: &Values<T>) -> Result<()> {
        v.check(self.num_states)
    }

    pub fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.len() != self.num_states {
            return Err(Error::invalid(format!(
                "policy has length {}, expected {}",
                pi.len(),
                self.num_states
            )));
        }
        for (s, &a) in pi.iter().enumerate() {
            if a >= self.num_actions(s) {
                return Err(Error::invalid(format!(
                    "policy picks action {a} at state {s}, which has {} actions",
                    self.num_actions(s)
                )));
            }
        }
        Ok(())
    }

    /// Per-state maximum of a state-action vector and the first maximizing
    /// action (lowest index wins ties).
    pub fn greedy(&self, q: &[T]) -> (Values<T>, Policy) {
        debug_assert_eq!(q.len(), self.a_tot());
        let (values, actions): (Vec<T>, Vec<usize>) = (0..self.num_states)
            .into_par_iter()
            .with_min_len(64)
            .map(|s| {
                let range = self.actions(s);
                let base = range.start;
                let mut best = q[base];
                let mut arg = 0;
                for (a, &val) in q[range].iter().enumerate().skip(1) {
                    if val > best {
                        best = val;
                        arg = a;
                    }
                }
                (best, arg)
            })
            .unzip();
        (values.into(), actions.into())
    }
}

/// Borrowed sparse transition row `p_a(s)`.
#[derive(Clone, Copy, Debug)]
pub struct Row<'a, T> {
    pub columns: &'a [usize],
    pub probs: &'a [T],
}

impl<T: Scalar> Row<'_, T> {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// `p^T u`, accumulated in stored column order.
    #[inline]
    pub fn dot(&self, u: &[T]) -> T {
        self.columns
            .iter()
            .zip(self.probs)
            .fold(T::zero(), |acc, (&c, &p)| acc + p * u[c])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.columns.iter().copied().zip(self.probs.iter().copied())
    }
}

/// A validated discounted MDP with sparse row-stochastic transitions.
///
/// Immutable after construction. Every read of a transition row bumps an
/// internal counter (see [`Instance::transition_reads`]) so callers can audit
/// which code paths touch the explicit matrix.
#[derive(Debug)]
pub struct Instance<T = f64> {
    shape: MdpShape<T>,
    row_offsets: Vec<usize>,
    columns: Vec<usize>,
    probs: Vec<T>,
    transition_reads: AtomicU64,
}

impl<T: Clone> Clone for Instance<T> {
    fn clone(&self) -> Self {
        Instance {
            shape: self.shape.clone(),
            row_offsets: self.row_offsets.clone(),
            columns: self.columns.clone(),
            probs: self.probs.clone(),
            transition_reads: AtomicU64::new(0),
        }
    }
}

impl<T: PartialEq> PartialEq for Instance<T> {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self.row_offsets == other.row_offsets
            && self.columns == other.columns
            && self.probs == other.probs
    }
}

impl<T: Scalar> Instance<T> {
    /// Builds and validates an instance with strict reward bounds.
    pub fn new(num_states: usize, gamma: T, states: Vec<Vec<Action<T>>>) -> Result<Self> {
        Self::with_options(num_states, gamma, states, ValidationOptions::default())
    }

    pub fn with_options(
        num_states: usize,
        gamma: T,
        states: Vec<Vec<Action<T>>>,
        options: ValidationOptions,
    ) -> Result<Self> {
        if num_states == 0 {
            return Err(validation(None, None, "instance has no states"));
        }
        if states.len() != num_states {
            return Err(validation(
                None,
                None,
                format!("{} action lists for {num_states} states", states.len()),
            ));
        }
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(validation(None, None, format!("gamma {gamma} not in (0, 1)")));
        }
        let tol = T::lit(ROW_SUM_TOLERANCE);

        let mut action_offsets = Vec::with_capacity(num_states + 1);
        let mut row_offsets = vec![0];
        let mut columns = Vec::new();
        let mut probs = Vec::new();
        let mut rewards = Vec::new();
        let mut seen = vec![false; num_states];
        action_offsets.push(0);

        for (s, actions) in states.into_iter().enumerate() {
            if actions.is_empty() {
                return Err(validation(Some(s), None, "state has no actions"));
            }
            for (a, action) in actions.into_iter().enumerate() {
                let r = action.reward;
                let in_unit = r >= T::zero() && r <= T::one();
                if !r.is_finite() || (!in_unit && !options.allow_unbounded_rewards) {
                    return Err(validation(
                        Some(s),
                        Some(a),
                        format!("reward {r} outside [0, 1]"),
                    ));
                }
                if action.transitions.is_empty() {
                    return Err(validation(Some(s), Some(a), "empty transition row"));
                }
                let mut sum = T::zero();
                for &(col, p) in &action.transitions {
                    if col >= num_states {
                        return Err(validation(
                            Some(s),
                            Some(a),
                            format!("successor {col} out of range"),
                        ));
                    }
                    if !(p >= T::zero() && p <= T::one()) {
                        return Err(validation(
                            Some(s),
                            Some(a),
                            format!("probability {p} outside [0, 1]"),
                        ));
                    }
                    if seen[col] {
                        return Err(validation(
                            Some(s),
                            Some(a),
                            format!("duplicate successor {col}"),
                        ));
                    }
                    seen[col] = true;
                    sum = sum + p;
                }
                for &(col, _) in &action.transitions {
                    seen[col] = false;
                }
                if (sum - T::one()).abs() > tol {
                    return Err(validation(
                        Some(s),
                        Some(a),
                        format!("row sums to {sum}, not 1"),
                    ));
                }
                for (col, p) in action.transitions {
                    columns.push(col);
                    probs.push(p);
                }
                row_offsets.push(columns.len());
                rewards.push(r);
            }
            action_offsets.push(rewards.len());
        }

        Ok(Instance {
            shape: MdpShape {
                num_states,
                action_offsets,
                rewards,
                gamma,
            },
            row_offsets,
            columns,
            probs,
            transition_reads: AtomicU64::new(0),
        })
    }

    /// Same rewards and transitions with a different discount.
    pub fn with_gamma(&self, gamma: T) -> Result<Self> {
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(validation(None, None, format!("gamma {gamma} not in (0, 1)")));
        }
        let mut out = self.clone();
        out.shape.gamma = gamma;
        Ok(out)
    }

    pub fn shape(&self) -> &MdpShape<T> {
        &self.shape
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.shape.num_states
    }

    #[inline]
    pub fn a_tot(&self) -> usize {
        self.shape.a_tot()
    }

    #[inline]
    pub fn gamma(&self) -> T {
        self.shape.gamma
    }

    /// Number of stored transition entries.
    pub fn nnz(&self) -> usize {
        self.columns.len()
    }

    /// Transition row of a pair. Counts as one transition read.
    #[inline]
    pub fn row(&self, pair: usize) -> Row<'_, T> {
        self.transition_reads.fetch_add(1, Ordering::Relaxed);
        let range = self.row_offsets[pair]..self.row_offsets[pair + 1];
        Row {
            columns: &self.columns[range.clone()],
            probs: &self.probs[range],
        }
    }

    /// Total transition rows read since construction.
    pub fn transition_reads(&self) -> u64 {
        self.transition_reads.load(Ordering::Relaxed)
    }

    /// Materializes the per-state action lists (inverse of construction).
    pub fn to_actions(&self) -> Vec<Vec<Action<T>>> {
        (0..self.num_states())
            .map(|s| {
                self.shape
                    .actions(s)
                    .map(|pair| Action::new(self.shape.reward(pair), self.row(pair).iter().collect()))
                    .collect()
            })
            .collect()
    }
}

fn validation(state: Option<usize>, action: Option<usize>, message: impl Into<String>) -> Error {
    Error::Validation {
        state,
        action,
        message: message.into(),
    }
}
