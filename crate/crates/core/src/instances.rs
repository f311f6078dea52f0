//! Seeded instance generators and the line-oriented instance file format.
//!
//! Instance file:
//!
//! ```text
//! <num_states> <gamma>
//! <s> <a> <reward> <k> <s1> <p1> ... <sk> <pk>
//! ```
//!
//! one record per state-action pair, states and actions in increasing order.
//! Numbers are written in shortest round-trip form, so `load(save(x)) == x`
//! bit for bit. Blank lines and lines starting with `#` are ignored.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::mdp::{Action, Instance};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InstanceKind {
    /// `support_size` random successors per pair with Dirichlet(1) weights.
    RandomSparse,
    /// One uniformly drawn successor per pair.
    Deterministic,
    /// Every pair shares one random distribution over `support_size` states.
    HighlyMixing,
    /// Action 0 advances along a line ending in a rewarding self-loop; other
    /// actions stay put with reward 0. Rewards ignore the reward law.
    Chain,
    /// Full-support rows with every entry within a factor 1.5 of `1/n`.
    WorstCaseSpread,
}

impl InstanceKind {
    pub const ALL: [InstanceKind; 5] = [
        InstanceKind::RandomSparse,
        InstanceKind::Deterministic,
        InstanceKind::HighlyMixing,
        InstanceKind::Chain,
        InstanceKind::WorstCaseSpread,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InstanceKind::RandomSparse => "random_sparse",
            InstanceKind::Deterministic => "deterministic",
            InstanceKind::HighlyMixing => "highly_mixing",
            InstanceKind::Chain => "chain",
            InstanceKind::WorstCaseSpread => "worst_case_spread",
        }
    }
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InstanceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown instance kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RewardLaw {
    Uniform01,
    /// Reward 1 with probability `p`, else 0.
    Bernoulli(f64),
}

impl fmt::Display for RewardLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardLaw::Uniform01 => f.write_str("uniform01"),
            RewardLaw::Bernoulli(p) => write!(f, "bernoulli({p})"),
        }
    }
}

impl FromStr for RewardLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform01" {
            return Ok(RewardLaw::Uniform01);
        }
        let p = s
            .strip_prefix("bernoulli(")
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(|| Error::config(format!("unknown reward law {s:?}")))?;
        let p: f64 = p
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad bernoulli parameter in {s:?}")))?;
        Ok(RewardLaw::Bernoulli(p))
    }
}

impl RewardLaw {
    fn draw(self, rng: &mut impl Rng) -> f64 {
        match self {
            RewardLaw::Uniform01 => rng.random::<f64>(),
            RewardLaw::Bernoulli(p) => {
                if rng.random_bool(p) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub kind: InstanceKind,
    pub num_states: usize,
    pub actions_per_state: usize,
    /// Nonzeros per row for `random_sparse` and `highly_mixing`.
    pub support_size: usize,
    pub gamma: f64,
    pub seed: u64,
    pub reward_law: RewardLaw,
}

impl GeneratorSpec {
    pub fn new(kind: InstanceKind, num_states: usize, actions_per_state: usize, gamma: f64, seed: u64) -> Self {
        GeneratorSpec {
            kind,
            num_states,
            actions_per_state,
            support_size: num_states.min(8),
            gamma,
            seed,
            reward_law: RewardLaw::Uniform01,
        }
    }

    pub fn with_support(mut self, support_size: usize) -> Self {
        self.support_size = support_size;
        self
    }

    pub fn with_rewards(mut self, law: RewardLaw) -> Self {
        self.reward_law = law;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.actions_per_state == 0 || self.support_size == 0 {
            return Err(Error::config("state, action and support counts must be positive"));
        }
        if self.support_size > self.num_states {
            return Err(Error::config(format!(
                "support size {} exceeds number of states {}",
                self.support_size, self.num_states
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("gamma {} not in (0, 1)", self.gamma)));
        }
        if let RewardLaw::Bernoulli(p) = self.reward_law {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("bernoulli parameter {p} not in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Key-value lines, one field per line.
    pub fn to_kv(&self) -> String {
        format!(
            "kind={}\nnum_states={}\nactions_per_state={}\nsupport_size={}\ngamma={}\nseed={}\nreward_law={}\n",
            self.kind,
            self.num_states,
            self.actions_per_state,
            self.support_size,
            self.gamma,
            self.seed,
            self.reward_law
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut num_states = None;
        let mut actions = None;
        let mut support = None;
        let mut gamma = None;
        let mut seed = None;
        let mut law = RewardLaw::Uniform01;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |_| parse_err(format!("bad value {value:?} for {key}"));
            match key {
                "kind" => kind = Some(value.parse().map_err(|e: Error| parse_err(e.to_string()))?),
                "num_states" => num_states = Some(value.parse().map_err(bad)?),
                "actions_per_state" => actions = Some(value.parse().map_err(bad)?),
                "support_size" => support = Some(value.parse().map_err(bad)?),
                "gamma" => gamma = Some(value.parse::<f64>().map_err(|_| parse_err(format!("bad gamma {value:?}")))?),
                "seed" => seed = Some(value.parse().map_err(bad)?),
                "reward_law" => law = value.parse().map_err(|e: Error| parse_err(e.to_string()))?,
                other => return Err(parse_err(format!("unknown key {other:?}"))),
            }
        }
        let missing = |k: &str| Error::config(format!("spec is missing {k}"));
        let num_states: usize = num_states.ok_or_else(|| missing("num_states"))?;
        let spec = GeneratorSpec {
            kind: kind.ok_or_else(|| missing("kind"))?,
            num_states,
            actions_per_state: actions.ok_or_else(|| missing("actions_per_state"))?,
            support_size: support.unwrap_or(num_states.min(8)),
            gamma: gamma.ok_or_else(|| missing("gamma"))?,
            seed: seed.unwrap_or(0),
            reward_law: law,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Normalizes positive weights to a distribution; the largest entry absorbs
/// the rounding residual.
fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let residual = 1.0 - weights.iter().sum::<f64>();
    let largest = (0..weights.len())
        .max_by(|&i, &j| weights[i].total_cmp(&weights[j]))
        .expect("nonempty row");
    weights[largest] += residual;
}

fn dirichlet_row(rng: &mut impl Rng, num_states: usize, support: usize) -> Vec<(usize, f64)> {
    let mut cols = index::sample(rng, num_states, support).into_vec();
    cols.sort_unstable();
    let mut weights: Vec<f64> = (0..support).map(|_| rng.sample::<f64, _>(Exp1).max(f64::MIN_POSITIVE)).collect();
    normalize(&mut weights);
    cols.into_iter().zip(weights).collect()
}

/// Builds the instance described by `spec`; a pure function of the spec.
pub fn generate(spec: &GeneratorSpec) -> Result<Instance> {
    spec.validate()?;
    let n = spec.num_states;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared = match spec.kind {
        InstanceKind::HighlyMixing => Some(dirichlet_row(&mut rng, n, spec.support_size)),
        _ => None,
    };
    let mut states = Vec::with_capacity(n);
    for s in 0..n {
        let mut actions = Vec::with_capacity(spec.actions_per_state);
        for a in 0..spec.actions_per_state {
            let action = match spec.kind {
                InstanceKind::Chain => {
                    let last = s + 1 == n;
                    match (a, last) {
                        (0, false) => Action::new(0.0, vec![(s + 1, 1.0)]),
                        (0, true) => Action::new(1.0, vec![(s, 1.0)]),
                        _ => Action::new(0.0, vec![(s, 1.0)]),
                    }
                }
                InstanceKind::RandomSparse => {
                    let row = dirichlet_row(&mut rng, n, spec.support_size);
                    Action::new(spec.reward_law.draw(&mut rng), row)
                }
                InstanceKind::Deterministic => {
                    let next = rng.random_range(0..n);
                    Action::new(spec.reward_law.draw(&mut rng), vec![(next, 1.0)])
                }
                InstanceKind::HighlyMixing => {
                    Action::new(spec.reward_law.draw(&mut rng), shared.clone().expect("shared row"))
                }
                InstanceKind::WorstCaseSpread => {
                    let mut weights: Vec<f64> = (0..n).map(|_| 1.0 + 0.5 * rng.random::<f64>()).collect();
                    normalize(&mut weights);
                    Action::new(spec.reward_law.draw(&mut rng), weights.into_iter().enumerate().collect())
                }
            };
            actions.push(action);
        }
        states.push(actions);
    }
    Instance::new(n, spec.gamma, states)
}

/// Serializes an instance to the text format.
pub fn to_text<T: Scalar>(inst: &Instance<T>) -> String {
    let mut out = format!("{} {}\n", inst.num_states(), inst.gamma());
    for (s, actions) in inst.to_actions().into_iter().enumerate() {
        for (a, action) in actions.into_iter().enumerate() {
            write!(out, "{s} {a} {} {}", action.reward, action.transitions.len()).expect("write to string");
            for (col, p) in action.transitions {
                write!(out, " {col} {p}").expect("write to string");
            }
            out.push('\n');
        }
    }
    out
}

fn parse_field<F: FromStr>(token: Option<&str>, line: usize, what: &str) -> Result<F> {
    let token = token.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what} {token:?}"),
    })
}

/// Parses the text format and validates the result.
pub fn from_text<T: Scalar>(text: &str) -> Result<Instance<T>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (header_line, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let mut fields = header.split_whitespace();
    let num_states: usize = parse_field(fields.next(), header_line, "number of states")?;
    let gamma: T = parse_field(fields.next(), header_line, "discount")?;
    if fields.next().is_some() {
        return Err(Error::Parse {
            line: header_line,
            message: "trailing fields in header".into(),
        });
    }

    let mut states: Vec<Vec<Action<T>>> = (0..num_states).map(|_| Vec::new()).collect();
    for (line, record) in lines {
        let mut fields = record.split_whitespace();
        let s: usize = parse_field(fields.next(), line, "state")?;
        let a: usize = parse_field(fields.next(), line, "action")?;
        let reward: T = parse_field(fields.next(), line, "reward")?;
        let k: usize = parse_field(fields.next(), line, "support size")?;
        if s >= num_states {
            return Err(Error::Parse {
                line,
                message: format!("state {s} out of range for {num_states} states"),
            });
        }
        if a != states[s].len() {
            return Err(Error::Parse {
                line,
                message: format!("expected action {} of state {s}, found {a}", states[s].len()),
            });
        }
        let mut transitions = Vec::with_capacity(k.min(num_states));
        for _ in 0..k {
            let col: usize = parse_field(fields.next(), line, "successor")?;
            let p: T = parse_field(fields.next(), line, "probability")?;
            transitions.push((col, p));
        }
        if fields.next().is_some() {
            return Err(Error::Parse {
                line,
                message: format!("more than {k} transitions"),
            });
        }
        states[s].push(Action::new(reward, transitions));
    }
    Instance::new(num_states, gamma, states)
}

pub fn save<T: Scalar>(inst: &Instance<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_text(inst))?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Instance<T>> {
    from_text(&fs::read_to_string(path)?)
}
