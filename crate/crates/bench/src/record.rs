//! Per-run record files: one `key=value` pair per line.
//!
//! Floats are written in shortest round-trip form, so a record parses back
//! to the same values. `wall_time` is stored in seconds rounded to 1 ms.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use tvrvi::solvers::{PhaseBudget, SolveConfig, SolveReport, Variant};

/// One outer-loop phase (or value-iteration step) as recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseLine {
    pub k: usize,
    pub alpha: f64,
    pub budget: PhaseBudget,
    pub queries: u64,
    pub step_norm: f64,
    pub value_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub instance: String,
    pub variant: Variant,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub v_upper: Option<f64>,
    pub verify: bool,
    pub num_states: usize,
    pub gamma: f64,
    pub total_queries: u64,
    pub matrix_products: u64,
    pub wall_time: f64,
    pub phases: Vec<PhaseLine>,
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    pub value_gap: Option<f64>,
    pub policy_gap: Option<f64>,
    pub invariants_hold: Option<bool>,
    pub halving_holds: Option<bool>,
    pub note: Option<String>,
}

/// Rounds seconds to 1 ms.
pub fn round_ms(seconds: f64) -> f64 {
    (seconds * 1e3).round() / 1e3
}

impl RunRecord {
    pub fn from_report(instance: &str, gamma: f64, config: &SolveConfig, report: &SolveReport) -> Self {
        let audited = report.audit.is_some();
        RunRecord {
            instance: instance.to_string(),
            variant: config.variant,
            epsilon: config.epsilon,
            delta: config.delta,
            seed: config.seed,
            v_upper: config.v_upper,
            verify: config.verify,
            num_states: report.values.len(),
            gamma,
            total_queries: report.total_queries,
            matrix_products: report.matrix_products,
            wall_time: round_ms(report.wall_time),
            phases: report
                .phases
                .iter()
                .map(|p| PhaseLine {
                    k: p.k,
                    alpha: p.alpha,
                    budget: p.budget,
                    queries: p.queries,
                    step_norm: p.step_norm,
                    value_gap: p.audit.map(|a| a.value_gap),
                })
                .collect(),
            values: report.values.to_vec(),
            policy: report.policy.to_vec(),
            value_gap: report.audit.map(|a| a.value_gap),
            policy_gap: report.audit.map(|a| a.policy_gap),
            invariants_hold: audited.then(|| report.invariants_hold()),
            halving_holds: audited.then(|| report.halving_holds()),
            note: report.note.clone(),
        }
    }

    /// `max(value_gap, policy_gap) <= epsilon`, when audited.
    pub fn success(&self) -> Option<bool> {
        Some(self.value_gap?.max(self.policy_gap?) <= self.epsilon)
    }

    pub fn summary_line(&self) -> String {
        let mut line = format!(
            "variant={} states={} epsilon={} queries={} products={} wall_time={:.3}",
            self.variant, self.num_states, self.epsilon, self.total_queries, self.matrix_products, self.wall_time
        );
        if self.values.len() <= 4 {
            write!(line, " values={}", join(&self.values)).unwrap();
        }
        if let (Some(v), Some(p)) = (self.value_gap, self.policy_gap) {
            write!(line, " value_gap={v:.3e} policy_gap={p:.3e} success={}", self.success().unwrap()).unwrap();
        }
        line
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("instance", self.instance.clone());
        kv("variant", self.variant.to_string());
        kv("epsilon", self.epsilon.to_string());
        kv("delta", self.delta.to_string());
        kv("seed", self.seed.to_string());
        kv("v_upper", opt(self.v_upper));
        kv("verify", self.verify.to_string());
        kv("num_states", self.num_states.to_string());
        kv("gamma", self.gamma.to_string());
        kv("total_queries", self.total_queries.to_string());
        kv("matrix_products", self.matrix_products.to_string());
        kv("wall_time", format!("{:.3}", self.wall_time));
        kv("value_gap", opt(self.value_gap));
        kv("policy_gap", opt(self.policy_gap));
        kv("invariants_hold", opt(self.invariants_hold));
        kv("halving_holds", opt(self.halving_holds));
        kv("note", self.note.clone().unwrap_or_default());
        kv("values", join(&self.values));
        kv("policy", join(&self.policy));
        for p in &self.phases {
            let budget = match p.budget {
                PhaseBudget::Exact => "exact".to_string(),
                PhaseBudget::Sampled { samples, eta, burn_in } => format!("{samples}:{eta}:{burn_in}"),
            };
            kv(
                "phase",
                format!("{} {} {} {} {} {}", p.k, p.alpha, budget, p.queries, p.step_norm, opt(p.value_gap)),
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rec = RunRecord {
            instance: String::new(),
            variant: Variant::Offline,
            epsilon: f64::NAN,
            delta: f64::NAN,
            seed: 0,
            v_upper: None,
            verify: false,
            num_states: 0,
            gamma: f64::NAN,
            total_queries: 0,
            matrix_products: 0,
            wall_time: 0.0,
            phases: Vec::new(),
            values: Vec::new(),
            policy: Vec::new(),
            value_gap: None,
            policy_gap: None,
            invariants_hold: None,
            halving_holds: None,
            note: None,
        };
        let mut seen_variant = false;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key=value", i + 1))?;
            let ctx = || format!("line {}: bad {key}", i + 1);
            match key {
                "instance" => rec.instance = value.to_string(),
                "variant" => {
                    rec.variant = value.parse().with_context(ctx)?;
                    seen_variant = true;
                }
                "epsilon" => rec.epsilon = value.parse().with_context(ctx)?,
                "delta" => rec.delta = value.parse().with_context(ctx)?,
                "seed" => rec.seed = value.parse().with_context(ctx)?,
                "v_upper" => rec.v_upper = parse_opt(value).with_context(ctx)?,
                "verify" => rec.verify = value.parse().with_context(ctx)?,
                "num_states" => rec.num_states = value.parse().with_context(ctx)?,
                "gamma" => rec.gamma = value.parse().with_context(ctx)?,
                "total_queries" => rec.total_queries = value.parse().with_context(ctx)?,
                "matrix_products" => rec.matrix_products = value.parse().with_context(ctx)?,
                "wall_time" => rec.wall_time = value.parse().with_context(ctx)?,
                "value_gap" => rec.value_gap = parse_opt(value).with_context(ctx)?,
                "policy_gap" => rec.policy_gap = parse_opt(value).with_context(ctx)?,
                "invariants_hold" => rec.invariants_hold = parse_opt(value).with_context(ctx)?,
                "halving_holds" => rec.halving_holds = parse_opt(value).with_context(ctx)?,
                "note" => rec.note = (!value.is_empty()).then(|| value.to_string()),
                "values" => rec.values = parse_list(value).with_context(ctx)?,
                "policy" => rec.policy = parse_list(value).with_context(ctx)?,
                "phase" => rec.phases.push(parse_phase(value).with_context(ctx)?),
                other => bail!("line {}: unknown key {other:?}", i + 1),
            }
        }
        if !seen_variant {
            bail!("record has no variant");
        }
        if rec.values.len() != rec.num_states || rec.policy.len() != rec.num_states {
            bail!("record values/policy length does not match num_states {}", rec.num_states);
        }
        Ok(rec)
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "none".into())
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    if s == "none" {
        Ok(None)
    } else {
        Ok(Some(s.parse()?))
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| Ok(x.parse()?)).collect()
}

fn parse_phase(s: &str) -> Result<PhaseLine> {
    let f: Vec<&str> = s.split(' ').collect();
    if f.len() != 6 {
        bail!("expected 6 phase fields, got {}", f.len());
    }
    let budget = if f[2] == "exact" {
        PhaseBudget::Exact
    } else {
        let b: Vec<&str> = f[2].split(':').collect();
        if b.len() != 3 {
            bail!("bad budget {:?}", f[2]);
        }
        PhaseBudget::Sampled {
            samples: b[0].parse()?,
            eta: b[1].parse()?,
            burn_in: b[2].parse()?,
        }
    };
    Ok(PhaseLine {
        k: f[0].parse()?,
        alpha: f[1].parse()?,
        budget,
        queries: f[3].parse()?,
        step_norm: f[4].parse()?,
        value_gap: parse_opt(f[5])?,
    })
}
