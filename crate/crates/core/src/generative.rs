//! Generative-model oracle built from an explicit instance.
//!
//! Each state-action pair gets a Vose alias table, so a single next-state
//! draw costs O(1). Randomness is counter based: the draw with a given
//! ordinal on a given `(seed, pair, stream)` is a fixed function of those four
//! numbers, so results never depend on how draws from different pairs or
//! streams interleave across threads.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::mdp::{Instance, MdpShape, Row};
use crate::scalar::Scalar;

/// Identifier of an independent random substream within a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamId(pub u64);

impl StreamId {
    /// Stream for the offset estimate computed at the start of phase `phase`.
    pub const fn offsets(phase: u32) -> Self {
        StreamId(((phase as u64) + 1) << 32)
    }

    /// Stream for inner-loop epoch `epoch` of phase `phase`.
    pub const fn epoch(phase: u32, epoch: u32) -> Self {
        StreamId((((phase as u64) + 1) << 32) | ((epoch as u64) + 1))
    }
}

/// Walker/Vose alias table over the support of one transition row.
#[derive(Clone, Debug)]
pub struct AliasTable {
    support: Vec<usize>,
    threshold: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new<T: Scalar>(row: Row<'_, T>) -> Self {
        let n = row.len();
        assert!(n > 0, "alias table over an empty row");
        let support = row.columns.to_vec();
        let total: f64 = row.probs.iter().map(|p| p.as_f64()).sum();
        let mut scaled: Vec<f64> = row.probs.iter().map(|p| p.as_f64() * n as f64 / total).collect();
        let mut threshold = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();

        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            threshold[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding.
        for i in small.into_iter().chain(large) {
            threshold[i] = 1.0;
        }
        AliasTable {
            support,
            threshold,
            alias,
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Maps a uniform in `[0, 1)` to a state using one variate for both the
    /// column and the coin.
    #[inline]
    pub fn sample_with(&self, u: f64) -> usize {
        let n = self.support.len();
        let scaled = u * n as f64;
        let col = (scaled as usize).min(n - 1);
        let coin = scaled - col as f64;
        if coin < self.threshold[col] {
            self.support[col]
        } else {
            self.support[self.alias[col] as usize]
        }
    }

    /// Decodes the table back into `(state, probability)` pairs in support order.
    pub fn probabilities(&self) -> Vec<(usize, f64)> {
        let n = self.support.len();
        let mut mass = vec![0.0; n];
        for i in 0..n {
            mass[i] += self.threshold[i];
            mass[self.alias[i] as usize] += 1.0 - self.threshold[i];
        }
        self.support
            .iter()
            .zip(mass)
            .map(|(&s, m)| (s, m / n as f64))
            .collect()
    }
}

/// Sparse row kept alongside the alias table for batched multinomial draws.
#[derive(Clone, Debug)]
struct BatchRow {
    probs: Vec<f64>,
    /// `tail[j] = sum of probs[j..]`.
    tail: Vec<f64>,
}

const SHARDS: usize = 16;

#[derive(Debug, Default)]
#[repr(align(64))]
struct Shard(AtomicU64);

/// Query counter split across cache lines, summed on read.
#[derive(Debug, Default)]
struct ShardedCounter([Shard; SHARDS]);

impl ShardedCounter {
    #[inline]
    fn add(&self, key: usize, n: u64) {
        self.0[key % SHARDS].0.fetch_add(n, Ordering::Relaxed);
    }

    fn total(&self) -> u64 {
        self.0.iter().map(|s| s.0.load(Ordering::Relaxed)).sum()
    }
}

/// Draws at or below `BATCH_FACTOR * support` use the alias table one sample
/// at a time; larger requests draw the multinomial count vector directly.
pub const BATCH_FACTOR: u64 = 16;

/// Sampling oracle for `p_a(s)`, with exact accounting of every draw.
///
/// The model exposes the instance's layout and rewards but not its
/// transition probabilities, so solvers written against it cannot read `P`.
#[derive(Debug)]
pub struct GenerativeModel<T = f64> {
    shape: MdpShape<T>,
    tables: Vec<AliasTable>,
    batch: Vec<BatchRow>,
    seed: u64,
    queries: ShardedCounter,
}

impl<T: Scalar> GenerativeModel<T> {
    /// Preprocesses every row in time linear in `nnz(P)`.
    pub fn build(inst: &Instance<T>, seed: u64) -> Self {
        let (tables, batch) = (0..inst.a_tot())
            .map(|pair| {
                let row = inst.row(pair);
                let probs: Vec<f64> = row.probs.iter().map(|p| p.as_f64()).collect();
                let mut tail = probs.clone();
                for j in (0..tail.len().saturating_sub(1)).rev() {
                    tail[j] += tail[j + 1];
                }
                (AliasTable::new(row), BatchRow { probs, tail })
            })
            .unzip();
        GenerativeModel {
            shape: inst.shape().clone(),
            tables,
            batch,
            seed,
            queries: ShardedCounter::default(),
        }
    }

    pub fn shape(&self) -> &MdpShape<T> {
        &self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn a_tot(&self) -> usize {
        self.shape.a_tot()
    }

    /// Total draws since construction.
    pub fn query_count(&self) -> u64 {
        self.queries.total()
    }

    pub fn alias_table(&self, pair: usize) -> Result<&AliasTable> {
        self.tables
            .get(pair)
            .ok_or_else(|| Error::invalid(format!("pair {pair} out of range ({} pairs)", self.tables.len())))
    }

    fn rng(&self, pair: usize, stream: StreamId) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(pair as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream.0);
        rng
    }

    /// The `ordinal`-th draw of `(pair, stream)`. Counts one query.
    pub fn sample_next(&self, pair: usize, stream: StreamId, ordinal: u64) -> Result<usize> {
        let table = self.alias_table(pair)?;
        let mut rng = self.rng(pair, stream);
        // Each draw consumes one u64, i.e. two 32-bit words.
        rng.set_word_pos(2 * ordinal as u128);
        self.queries.add(pair, 1);
        Ok(table.sample_with(unit(rng.next_u64())))
    }

    /// Sequential sampler over `(pair, stream)` starting at ordinal 0; yields
    /// the same states as [`GenerativeModel::sample_next`] with ordinals 0, 1, ...
    pub fn sampler(&self, pair: usize, stream: StreamId) -> Result<PairSampler<'_, T>> {
        let table = self.alias_table(pair)?;
        Ok(PairSampler {
            model: self,
            table,
            pair,
            rng: self.rng(pair, stream),
        })
    }

    /// Draws `m` next states of `pair` and reports them as `(state, count)`
    /// groups. Counts `m` queries.
    ///
    /// Small requests run the alias sampler draw by draw (`count == 1` each);
    /// large ones sample the multinomial histogram of the `m` draws with
    /// conditional binomials, which has the same distribution.
    pub fn draw_counts(
        &self,
        pair: usize,
        stream: StreamId,
        m: u64,
        mut visit: impl FnMut(usize, u64),
    ) -> Result<()> {
        let table = self.alias_table(pair)?;
        let support = table.support.len();
        let mut rng = self.rng(pair, stream);
        if m <= BATCH_FACTOR * support as u64 {
            for _ in 0..m {
                visit(table.sample_with(unit(rng.next_u64())), 1);
            }
        } else {
            let row = &self.batch[pair];
            let mut remaining = m;
            for j in 0..support {
                if remaining == 0 {
                    break;
                }
                let count = if j + 1 == support {
                    remaining
                } else {
                    let p = (row.probs[j] / row.tail[j]).clamp(0.0, 1.0);
                    Binomial::new(remaining, p)
                        .expect("probability clamped to [0, 1]")
                        .sample(&mut rng)
                };
                if count > 0 {
                    visit(table.support[j], count);
                    remaining -= count;
                }
            }
        }
        self.queries.add(pair, m);
        Ok(())
    }
}

/// Iterator-style access to one `(pair, stream)`.
pub struct PairSampler<'a, T> {
    model: &'a GenerativeModel<T>,
    table: &'a AliasTable,
    pair: usize,
    rng: ChaCha8Rng,
}

impl<T> PairSampler<'_, T> {
    #[inline]
    pub fn next_state(&mut self) -> usize {
        self.model.queries.add(self.pair, 1);
        self.table.sample_with(unit(self.rng.next_u64()))
    }
}

#[inline]
fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Action;
    use crate::testing::dense_random;

    fn two_rows() -> Instance {
        Instance::new(
            4,
            0.9,
            vec![
                vec![Action::new(0.0, vec![(2, 1.0)]), Action::new(0.0, vec![(0, 0.5), (1, 0.5)])],
                vec![Action::new(0.0, vec![(0, 0.1), (1, 0.2), (2, 0.3), (3, 0.4)])],
                vec![Action::new(0.0, vec![(3, 1.0)])],
                vec![Action::new(0.0, vec![(3, 0.999), (0, 0.001)])],
            ],
        )
        .unwrap()
    }

    // Upper 1e-3 critical values of the chi-square distribution, df = 1..=5.
    const CHI2_CRIT: [f64; 5] = [10.828, 13.816, 16.266, 18.467, 20.515];

    fn chi_square(counts: &[(usize, u64)], probs: &[(usize, f64)], n: u64) -> f64 {
        probs
            .iter()
            .map(|&(s, p)| {
                let obs = counts.iter().find(|c| c.0 == s).map_or(0, |c| c.1) as f64;
                let exp = p * n as f64;
                (obs - exp).powi(2) / exp
            })
            .sum()
    }

    #[test]
    fn point_mass_always_returns_support() {
        let inst = two_rows();
        let model = GenerativeModel::build(&inst, 3);
        let mut sampler = model.sampler(0, StreamId(9)).unwrap();
        assert!((0..1000).all(|_| sampler.next_state() == 2));
        model
            .draw_counts(0, StreamId(1), 1_000_000, |s, c| {
                assert_eq!((s, c), (2, 1_000_000));
            })
            .unwrap();
    }

    #[test]
    fn alias_reconstruction_is_exact() {
        for seed in 0..5 {
            let inst = dense_random(30, 3, 0.9, seed).to_instance();
            let model = GenerativeModel::build(&inst, 0);
            for pair in 0..inst.a_tot() {
                let row = inst.row(pair);
                let decoded = model.alias_table(pair).unwrap().probabilities();
                let tv: f64 = decoded
                    .iter()
                    .zip(row.iter())
                    .map(|(&(s, q), (c, p))| {
                        assert_eq!(s, c);
                        (q - p).abs()
                    })
                    .sum::<f64>()
                    / 2.0;
                assert!(tv <= 1e-12, "tv {tv}");
            }
        }
    }

    #[test]
    fn fair_coin_frequency() {
        let model = GenerativeModel::build(&two_rows(), 42);
        let mut sampler = model.sampler(1, StreamId(0)).unwrap();
        let n = 100_000;
        let zeros = (0..n).filter(|_| sampler.next_state() == 0).count();
        // 3 sigma of a Bernoulli(1/2) mean at 1e5 draws is ~0.0047.
        assert!((zeros as f64 / n as f64 - 0.5).abs() <= 0.01);
    }

    #[test]
    fn chi_square_per_draw_and_batched() {
        let inst = two_rows();
        let model = GenerativeModel::build(&inst, 7);
        let probs: Vec<(usize, f64)> = inst.row(2).iter().collect();
        let n = 100_000u64;

        let mut sampler = model.sampler(2, StreamId(5)).unwrap();
        let mut counts = vec![(0usize, 0u64), (1, 0), (2, 0), (3, 0)];
        for _ in 0..n {
            counts[sampler.next_state()].1 += 1;
        }
        assert!(chi_square(&counts, &probs, n) < CHI2_CRIT[2]);

        let mut batched = vec![(0usize, 0u64), (1, 0), (2, 0), (3, 0)];
        for rep in 0..100u64 {
            model
                .draw_counts(2, StreamId(100 + rep), 1000, |s, c| batched[s].1 += c)
                .unwrap();
        }
        assert!(chi_square(&batched, &probs, n) < CHI2_CRIT[2]);
    }

    #[test]
    fn replay_is_deterministic_and_counter_based() {
        let model = GenerativeModel::build(&two_rows(), 11);
        let mut a = model.sampler(2, StreamId::epoch(1, 3)).unwrap();
        let first: Vec<usize> = (0..200).map(|_| a.next_state()).collect();
        // Interleave other pairs and streams; replay must not change.
        let mut other = model.sampler(1, StreamId::epoch(1, 3)).unwrap();
        let _ = (0..50).map(|_| other.next_state()).count();
        let mut b = model.sampler(2, StreamId::epoch(1, 3)).unwrap();
        let second: Vec<usize> = (0..200).map(|_| b.next_state()).collect();
        assert_eq!(first, second);
        for (ordinal, &s) in first.iter().enumerate().step_by(17) {
            assert_eq!(model.sample_next(2, StreamId::epoch(1, 3), ordinal as u64).unwrap(), s);
        }
        let rebuilt = GenerativeModel::build(&two_rows(), 11);
        let mut c = rebuilt.sampler(2, StreamId::epoch(1, 3)).unwrap();
        assert_eq!(first, (0..200).map(|_| c.next_state()).collect::<Vec<_>>());
    }

    #[test]
    fn hoeffding_width_mean_check() {
        let inst = two_rows();
        let model = GenerativeModel::build(&inst, 5);
        let v = [3.0, -1.0, 0.5, 2.0];
        let exact: f64 = inst.row(2).dot(&v);
        let n = 100_000;
        let mut sampler = model.sampler(2, StreamId(0)).unwrap();
        let mean = (0..n).map(|_| v[sampler.next_state()]).sum::<f64>() / n as f64;
        assert!((mean - exact).abs() <= 4.0 * 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn query_accounting() {
        let model = GenerativeModel::build(&two_rows(), 0);
        assert_eq!(model.query_count(), 0);
        let mut s = model.sampler(1, StreamId(0)).unwrap();
        for _ in 0..37 {
            s.next_state();
        }
        model.sample_next(3, StreamId(0), 5).unwrap();
        assert_eq!(model.query_count(), 38);
        model.draw_counts(3, StreamId(1), 10, |_, _| {}).unwrap();
        model.draw_counts(3, StreamId(2), 5_000_000_000, |_, _| {}).unwrap();
        assert_eq!(model.query_count(), 38 + 10 + 5_000_000_000);
    }

    #[test]
    fn batched_counts_sum_to_request() {
        let model = GenerativeModel::build(&two_rows(), 1);
        for m in [1u64, 63, 64, 65, 1000, 123_456_789] {
            let mut total = 0;
            model.draw_counts(2, StreamId(m), m, |_, c| total += c).unwrap();
            assert_eq!(total, m);
        }
    }

    #[test]
    fn invalid_pair_is_rejected() {
        let model = GenerativeModel::build(&two_rows(), 0);
        assert!(model.sample_next(99, StreamId(0), 0).is_err());
        assert!(model.sampler(5, StreamId(0)).is_err());
        assert!(model.draw_counts(5, StreamId(0), 1, |_, _| {}).is_err());
        assert_eq!(model.query_count(), 0);
    }
}
