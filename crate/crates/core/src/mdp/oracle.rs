//! Exact reference solutions: policy evaluation by linear solve and optimal
//! values by classic value iteration with an a-priori iteration count.

use super::instance::Instance;
use super::ops::bellman;
use super::vectors::{Policy, Values};
use crate::error::{Error, Result};
use crate::scalar::{max_norm_diff, Scalar};

/// Largest state count solved by dense elimination; bigger systems iterate.
pub const DENSE_SOLVE_LIMIT: usize = 2000;

const MAX_FIXED_POINT_ITERS: usize = 10_000_000;

/// Iterations of classic value iteration from zero that guarantee
/// `||v_t - v*|| <= tol`, using `||v_t - v*|| <= gamma^t / (1 - gamma)`.
pub fn value_iteration_steps(gamma: f64, tol: f64) -> usize {
    let horizon = 1.0 / (1.0 - gamma);
    let t = (horizon * (horizon / tol).ln()).ceil();
    if t > 0.0 {
        t as usize
    } else {
        0
    }
}

/// Solves `(I - gamma P^pi) y = rhs` for a policy's transition matrix.
///
/// The returned `y` satisfies `||rhs + gamma P^pi y - y||_inf <= tol`.
pub fn solve_policy_system<T: Scalar>(
    inst: &Instance<T>,
    pi: &Policy,
    rhs: &[T],
    tol: T,
) -> Result<Values<T>> {
    let n = inst.num_states();
    inst.shape().check_policy(pi)?;
    if rhs.len() != n {
        return Err(Error::invalid(format!("rhs has length {}, expected {n}", rhs.len())));
    }
    if !(tol > T::zero()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let gamma = inst.gamma();
    let apply = |y: &Values<T>| -> Values<T> {
        (0..n)
            .map(|s| {
                let pair = inst.shape().pair(s, pi[s]);
                rhs[s] + gamma * inst.row(pair).dot(y)
            })
            .collect()
    };

    let (mut y, cap): (Values<T>, usize) = if n <= DENSE_SOLVE_LIMIT {
        (dense_solve(inst, pi, rhs), 10_000)
    } else {
        (rhs.to_vec().into(), MAX_FIXED_POINT_ITERS)
    };
    // Contraction polishes whatever the direct solve left over.
    let mut residual = T::infinity();
    for _ in 0..cap {
        let next = apply(&y);
        residual = max_norm_diff(&next, &y);
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            return Ok(y);
        }
        y = next;
    }
    Err(Error::NumericalFailure {
        iterations: cap,
        residual: residual.as_f64(),
    })
}

fn dense_solve<T: Scalar>(inst: &Instance<T>, pi: &Policy, rhs: &[T]) -> Values<T> {
    let n = inst.num_states();
    let gamma = inst.gamma();
    let mut a = vec![T::zero(); n * n];
    let mut b = rhs.to_vec();
    for s in 0..n {
        a[s * n + s] = T::one();
        let pair = inst.shape().pair(s, pi[s]);
        for (col, p) in inst.row(pair).iter() {
            a[s * n + col] = a[s * n + col] - gamma * p;
        }
    }
    // Gaussian elimination with partial pivoting. I - gamma P is strictly
    // diagonally dominant, so pivots stay bounded away from zero.
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().partial_cmp(&a[j * n + k].abs()).unwrap())
            .unwrap();
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            b.swap(k, piv);
        }
        let d = a[k * n + k];
        for i in k + 1..n {
            let f = a[i * n + k] / d;
            if f == T::zero() {
                continue;
            }
            for c in k..n {
                a[i * n + c] = a[i * n + c] - f * a[k * n + c];
            }
            b[i] = b[i] - f * b[k];
        }
    }
    let mut y = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for c in k + 1..n {
            acc = acc - a[k * n + c] * y[c];
        }
        y[k] = acc / a[k * n + k];
    }
    y.into()
}

/// Exact values of a fixed policy: `v` with `||T_pi(v) - v||_inf <= tol`.
pub fn exact_policy_values<T: Scalar>(inst: &Instance<T>, pi: &Policy, tol: T) -> Result<Values<T>> {
    inst.shape().check_policy(pi)?;
    let rewards: Vec<T> = (0..inst.num_states())
        .map(|s| inst.shape().reward(inst.shape().pair(s, pi[s])))
        .collect();
    solve_policy_system(inst, pi, &rewards, tol)
}

/// Optimal values within `tol` of `v*` in max-norm, plus the greedy policy
/// with respect to them.
pub fn exact_optimal_values<T: Scalar>(inst: &Instance<T>, tol: T) -> Result<(Values<T>, Policy)> {
    if !(tol > T::zero()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let steps = value_iteration_steps(inst.gamma().as_f64(), tol.as_f64());
    let mut v = Values::zeros(inst.num_states());
    for _ in 0..steps {
        v = bellman(inst, &v)?.0;
    }
    let (_, pi) = bellman(inst, &v)?;
    Ok((v, pi))
}

/// `(||v* - v||_inf, ||v* - v^pi||_inf)` against the exact oracles.
pub fn epsilon_optimality_gap<T: Scalar>(
    inst: &Instance<T>,
    v: &Values<T>,
    pi: &Policy,
    oracle_tol: T,
) -> Result<(T, T)> {
    inst.shape().check_values(v)?;
    let (v_star, _) = exact_optimal_values(inst, oracle_tol)?;
    let v_pi = exact_policy_values(inst, pi, oracle_tol)?;
    Ok((max_norm_diff(&v_star, v), max_norm_diff(&v_star, &v_pi)))
}
