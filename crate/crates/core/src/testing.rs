//! Independent dense reference code for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{Action, Instance, Policy, Values};

/// A small MDP stored as dense rows, evaluated with plain loops.
pub struct DenseMdp {
    pub n: usize,
    pub gamma: f64,
    /// `actions[s][a] = (reward, dense row)`.
    pub actions: Vec<Vec<(f64, Vec<f64>)>>,
}

impl DenseMdp {
    pub fn random(n: usize, num_actions: usize, gamma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actions = (0..n)
            .map(|_| {
                (0..num_actions)
                    .map(|_| {
                        let mut row: Vec<f64> = (0..n)
                            .map(|_| if rng.random_bool(0.5) { rng.random::<f64>() } else { 0.0 })
                            .collect();
                        let k = rng.random_range(0..n);
                        row[k] += 0.5;
                        let total: f64 = row.iter().sum();
                        row.iter_mut().for_each(|p| *p /= total);
                        (rng.random::<f64>(), row)
                    })
                    .collect()
            })
            .collect();
        DenseMdp { n, gamma, actions }
    }

    pub fn to_instance(&self) -> Instance {
        let states = self
            .actions
            .iter()
            .map(|acts| {
                acts.iter()
                    .map(|(r, row)| {
                        let entries = row
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0.0)
                            .map(|(j, &p)| (j, p))
                            .collect();
                        Action::new(*r, entries)
                    })
                    .collect()
            })
            .collect();
        Instance::new(self.n, self.gamma, states).unwrap()
    }

    fn q(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let (r, row) = &self.actions[s][a];
        let mut acc = 0.0;
        for j in 0..self.n {
            acc += row[j] * v[j];
        }
        r + self.gamma * acc
    }

    pub fn bellman(&self, v: &Values) -> (Vec<f64>, Vec<usize>) {
        let mut out = vec![0.0; self.n];
        let mut pi = vec![0; self.n];
        for s in 0..self.n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..self.actions[s].len() {
                let q = self.q(s, a, v);
                if q > best {
                    best = q;
                    pi[s] = a;
                }
            }
            out[s] = best;
        }
        (out, pi)
    }

    pub fn bellman_policy(&self, pi: &Policy, v: &Values) -> Vec<f64> {
        (0..self.n).map(|s| self.q(s, pi[s], v)).collect()
    }
}

pub fn dense_random(n: usize, num_actions: usize, gamma: f64, seed: u64) -> DenseMdp {
    DenseMdp::random(n, num_actions, gamma, seed)
}
