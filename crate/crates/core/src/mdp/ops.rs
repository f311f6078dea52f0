use std::ops::{Add, Sub};

use num_traits::Zero;
use rayon::prelude::*;

use super::instance::Instance;
use super::vectors::{Policy, QValues, Values};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const PAR_MIN_ROWS: usize = 256;

/// `P v`: one expected next value per state-action pair.
pub fn transition_product<T: Scalar>(inst: &Instance<T>, v: &[T]) -> Result<QValues<T>> {
    if v.len() != inst.num_states() {
        return Err(Error::invalid(format!(
            "vector has length {}, expected {}",
            v.len(),
            inst.num_states()
        )));
    }
    Ok((0..inst.a_tot())
        .into_par_iter()
        .with_min_len(PAR_MIN_ROWS)
        .map(|pair| inst.row(pair).dot(v))
        .collect::<Vec<_>>()
        .into())
}

/// `r + gamma P v`.
pub fn q_values<T: Scalar>(inst: &Instance<T>, v: &Values<T>) -> Result<QValues<T>> {
    inst.shape().check_values(v)?;
    let gamma = inst.gamma();
    let rewards = inst.shape().rewards();
    Ok((0..inst.a_tot())
        .into_par_iter()
        .with_min_len(PAR_MIN_ROWS)
        .map(|pair| rewards[pair] + gamma * inst.row(pair).dot(v))
        .collect::<Vec<_>>()
        .into())
}

/// The Bellman value operator together with a greedy policy (lowest action
/// index on ties).
pub fn bellman<T: Scalar>(inst: &Instance<T>, v: &Values<T>) -> Result<(Values<T>, Policy)> {
    let q = q_values(inst, v)?;
    Ok(inst.shape().greedy(&q))
}

/// The Bellman operator restricted to a fixed policy.
pub fn bellman_policy<T: Scalar>(inst: &Instance<T>, pi: &Policy, v: &Values<T>) -> Result<Values<T>> {
    let shape = inst.shape();
    shape.check_policy(pi)?;
    shape.check_values(v)?;
    let gamma = inst.gamma();
    Ok((0..inst.num_states())
        .into_par_iter()
        .with_min_len(PAR_MIN_ROWS)
        .map(|s| {
            let pair = shape.pair(s, pi[s]);
            shape.reward(pair) + gamma * inst.row(pair).dot(v)
        })
        .collect::<Vec<_>>()
        .into())
}

/// Entrywise `median{a - step, b, a + step}`, i.e. `b` clamped to the band of
/// half-width `step` around `a`.
///
/// Only needs ordered-ring arithmetic, so it also runs on exact rationals.
pub fn truncate_median<N>(a: &[N], b: &[N], step: N) -> Result<Vec<N>>
where
    N: Copy + PartialOrd + Add<Output = N> + Sub<Output = N> + Zero,
{
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "truncation operands have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if step < N::zero() {
        return Err(Error::invalid("negative truncation step"));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(&center, &x)| {
            let lo = center - step;
            let hi = center + step;
            if x < lo {
                lo
            } else if x > hi {
                hi
            } else {
                x
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Action;
    use crate::testing::{dense_random, DenseMdp};
    use num_rational::Rational64;
    use proptest::prelude::*;

    fn self_loop(reward: f64, gamma: f64) -> Instance {
        Instance::new(1, gamma, vec![vec![Action::new(reward, vec![(0, 1.0)])]]).unwrap()
    }

    #[test]
    fn bellman_self_loop() {
        let inst = self_loop(1.0, 0.5);
        let (v, pi) = bellman(&inst, &Values::zeros(1)).unwrap();
        assert_eq!(&v[..], &[1.0]);
        assert_eq!(&pi[..], &[0]);
    }

    #[test]
    fn bellman_policy_self_loop() {
        let inst = self_loop(1.0, 0.9);
        let v = bellman_policy(&inst, &Policy::first_actions(1), &vec![10.0].into()).unwrap();
        assert!((v[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_and_policy_errors() {
        let inst = self_loop(1.0, 0.5);
        assert!(bellman(&inst, &Values::zeros(2)).is_err());
        assert!(bellman(&inst, &vec![f64::NAN].into()).is_err());
        assert!(bellman_policy(&inst, &vec![1].into(), &Values::zeros(1)).is_err());
        assert!(truncate_median(&[1.0], &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn bellman_matches_dense_brute_force() {
        let dense = DenseMdp::random(5, 3, 0.9, 7);
        let inst = dense.to_instance();
        let v: Values = (0..5).map(|i| 0.3 * i as f64 - 0.2).collect();
        let (out, pi) = bellman(&inst, &v).unwrap();
        let (want, want_pi) = dense.bellman(&v);
        for s in 0..5 {
            assert!((out[s] - want[s]).abs() < 1e-12);
        }
        assert_eq!(&pi[..], &want_pi[..]);

        let fixed: Policy = vec![2, 0, 1, 1, 0].into();
        let out = bellman_policy(&inst, &fixed, &v).unwrap();
        let want = dense.bellman_policy(&fixed, &v);
        for s in 0..5 {
            assert!((out[s] - want[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_policy_reproduces_bellman() {
        let inst = dense_random(12, 4, 0.8, 3).to_instance();
        let v: Values = (0..12).map(|i| (i as f64).sin()).collect();
        let (tv, pi) = bellman(&inst, &v).unwrap();
        let tpv = bellman_policy(&inst, &pi, &v).unwrap();
        assert_eq!(tv, tpv);
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(truncate_median(&[1.0], &[0.5], 0.1).unwrap(), vec![0.9]);
        assert_eq!(truncate_median(&[1.0], &[1.05], 0.1).unwrap(), vec![1.05]);
        assert_eq!(truncate_median(&[1.0], &[2.0], 0.25).unwrap(), vec![1.25]);
        assert_eq!(truncate_median(&[1.0], &[2.0], 0.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn truncation_runs_on_rationals() {
        let r = |n, d| Rational64::new(n, d);
        let out = truncate_median(&[r(1, 3)], &[r(1, 2)], r(1, 12)).unwrap();
        assert_eq!(out, vec![r(5, 12)]);
    }

    #[test]
    fn works_in_single_precision() {
        let inst = Instance::<f32>::new(1, 0.5, vec![vec![Action::new(1.0, vec![(0, 1.0)])]]).unwrap();
        let (v, _) = bellman(&inst, &Values::filled(1, 2.0f32)).unwrap();
        assert_eq!(v[0], 2.0);
    }

    proptest! {
        #[test]
        fn truncation_stays_in_band(
            a in prop::collection::vec(-10.0f64..10.0, 1..40),
            seed in any::<u64>(),
            step in 0.0f64..3.0,
        ) {
            let b: Vec<f64> = a.iter().enumerate()
                .map(|(i, x)| x + ((seed.rotate_left(i as u32) % 2001) as f64 / 100.0 - 10.0))
                .collect();
            let out = truncate_median(&a, &b, step).unwrap();
            for i in 0..a.len() {
                prop_assert!(out[i] >= a[i] - step && out[i] <= a[i] + step);
            }
        }

        #[test]
        fn bellman_is_gamma_contraction_and_monotone(
            seed in 0u64..1000,
            shift in prop::collection::vec(0.0f64..2.0, 8),
            base in prop::collection::vec(-5.0f64..5.0, 8),
        ) {
            let inst = dense_random(8, 3, 0.9, seed).to_instance();
            let v: Values = base.clone().into();
            let u: Values = base.iter().zip(&shift).map(|(b, s)| b + s).collect();
            let (tv, _) = bellman(&inst, &v).unwrap();
            let (tu, _) = bellman(&inst, &u).unwrap();
            let lhs = crate::scalar::max_norm_diff(&tv, &tu);
            let rhs = 0.9 * crate::scalar::max_norm_diff(&v, &u);
            prop_assert!(lhs <= rhs + 1e-12);
            for s in 0..8 {
                prop_assert!(tv[s] <= tu[s] + 1e-12);
            }
        }
    }
}
