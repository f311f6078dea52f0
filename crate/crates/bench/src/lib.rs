//! Command implementations behind the `tvrvi` binary.
//!
//! * [`record`]: per-run `key=value` record files.
//! * [`plan`]: TOML benchmark plans, the worker pool and CSV output.

pub mod plan;
pub mod record;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tvrvi::instances::{load, save, generate, GeneratorSpec};
use tvrvi::mdp::{epsilon_optimality_gap, Policy, Values};
use tvrvi::solvers::{solve, SolveConfig};
use tvrvi::DmdpInstance;

use crate::record::RunRecord;

/// Companion spec path: the instance path with a `.spec` extension.
pub fn spec_path(instance: &Path) -> PathBuf {
    instance.with_extension("spec")
}

/// Writes the generated instance to `out` and its spec next to it.
pub fn cmd_gen(spec: &GeneratorSpec, out: &Path) -> Result<PathBuf> {
    let inst = generate(spec)?;
    save(&inst, out).with_context(|| format!("writing {}", out.display()))?;
    let spec_out = spec_path(out);
    fs::write(&spec_out, spec.to_kv()).with_context(|| format!("writing {}", spec_out.display()))?;
    Ok(spec_out)
}

pub fn load_instance(path: &Path) -> Result<DmdpInstance> {
    load(path).with_context(|| format!("loading {}", path.display()))
}

/// Solves the instance at `path` and optionally writes the record to `out`.
pub fn cmd_solve(path: &Path, config: &SolveConfig, out: Option<&Path>) -> Result<RunRecord> {
    let inst = load_instance(path)?;
    let report = solve(&inst, config)?;
    let record = RunRecord::from_report(&path.display().to_string(), inst.gamma(), config, &report);
    if let Some(out) = out {
        fs::write(out, record.to_text()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(record)
}

/// Recomputes the oracle gaps of a stored record against the instance.
pub fn cmd_verify(instance: &Path, record: &Path, oracle_tol: f64) -> Result<RunRecord> {
    let inst = load_instance(instance)?;
    let text = fs::read_to_string(record).with_context(|| format!("reading {}", record.display()))?;
    let mut rec = RunRecord::parse(&text)?;
    let values = Values::from(rec.values.clone());
    let policy = Policy::from(rec.policy.clone());
    let (value_gap, policy_gap) = epsilon_optimality_gap(&inst, &values, &policy, oracle_tol)?;
    rec.value_gap = Some(value_gap);
    rec.policy_gap = Some(policy_gap);
    Ok(rec)
}
