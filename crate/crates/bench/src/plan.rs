//! Benchmark plans: a TOML grid over instances, variants, epsilon, delta,
//! gamma and seeds, executed cell by cell with a fixed number of trials.
//!
//! ```toml
//! output_dir = "out"
//! trials = 5
//! variants = ["offline", "sample"]
//! epsilons = [0.4, 0.2, 0.1]
//! deltas = [0.1]
//! seeds = [1]
//! gammas = [0.9]          # optional; overrides each instance's discount
//!
//! [[instances]]
//! path = "a.mdp"
//!
//! [[instances]]
//! kind = "random_sparse"
//! num_states = 30
//! actions_per_state = 3
//! support_size = 8
//! gamma = 0.9
//! seed = 4
//! ```
//!
//! Trial `t` of a cell with seed `s` solves with seed `s + t`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tvrvi::audit::Auditor;
use tvrvi::instances::{generate, load, GeneratorSpec, RewardLaw};
use tvrvi::mdp::exact_policy_values;
use tvrvi::scalar::max_norm_diff;
use tvrvi::solvers::{max_v_upper, solve, SolveConfig, Variant, DEFAULT_ORACLE_TOL};
use tvrvi::DmdpInstance;

use crate::record::{round_ms, RunRecord};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum InstanceSource {
    File {
        path: PathBuf,
    },
    Generated {
        kind: String,
        num_states: usize,
        actions_per_state: usize,
        support_size: Option<usize>,
        gamma: f64,
        #[serde(default)]
        seed: u64,
        reward_law: Option<String>,
    },
}

impl InstanceSource {
    pub fn label(&self) -> String {
        match self {
            InstanceSource::File { path } => path.display().to_string(),
            InstanceSource::Generated {
                kind, num_states, seed, ..
            } => format!("{kind}-{num_states}-{seed}"),
        }
    }

    fn resolve(&self, base: &Path) -> Result<DmdpInstance> {
        match self {
            InstanceSource::File { path } => {
                let full = base.join(path);
                load(&full).with_context(|| format!("loading {}", full.display()))
            }
            InstanceSource::Generated {
                kind,
                num_states,
                actions_per_state,
                support_size,
                gamma,
                seed,
                reward_law,
            } => {
                let mut spec = GeneratorSpec::new(kind.parse()?, *num_states, *actions_per_state, *gamma, *seed);
                if let Some(k) = support_size {
                    spec = spec.with_support(*k);
                }
                if let Some(law) = reward_law {
                    spec = spec.with_rewards(law.parse::<RewardLaw>()?);
                }
                Ok(generate(&spec)?)
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BenchPlan {
    pub output_dir: PathBuf,
    pub trials: usize,
    pub variants: Vec<String>,
    pub epsilons: Vec<f64>,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub gammas: Vec<f64>,
    /// `V` for the problem-dependent variant; defaults to `3 (1-gamma)^-1.5`.
    pub v_upper: Option<f64>,
    /// Per-epoch invariant audits (costly); final oracle gaps are always computed.
    #[serde(default)]
    pub verify: bool,
    pub instances: Vec<InstanceSource>,
}

impl BenchPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: BenchPlan = toml::from_str(text).context("parsing bench plan")?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.variants.is_empty()
            || self.epsilons.is_empty()
            || self.deltas.is_empty()
            || self.seeds.is_empty()
            || self.instances.is_empty()
        {
            bail!("instances, variants, epsilons, deltas and seeds must be nonempty");
        }
        for v in &self.variants {
            v.parse::<Variant>()?;
        }
        Ok(())
    }

    /// Cells in a fixed order: instance, variant, gamma, epsilon, delta, seed.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let variants: Vec<Variant> = self.variants.iter().map(|v| v.parse()).collect::<Result<_, _>>()?;
        let gammas: Vec<Option<f64>> = if self.gammas.is_empty() {
            vec![None]
        } else {
            self.gammas.iter().copied().map(Some).collect()
        };
        let mut cells = Vec::new();
        for instance in 0..self.instances.len() {
            for &variant in &variants {
                for &gamma in &gammas {
                    for &epsilon in &self.epsilons {
                        for &delta in &self.deltas {
                            for &seed in &self.seeds {
                                cells.push(Cell {
                                    index: cells.len(),
                                    instance,
                                    variant,
                                    gamma,
                                    epsilon,
                                    delta,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub instance: usize,
    pub variant: Variant,
    pub gamma: Option<f64>,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
}

/// One CSV row per (cell, trial).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell: usize,
    pub trial: usize,
    pub instance: String,
    pub variant: String,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub queries: u64,
    pub wall_time: f64,
    pub value_gap: Option<f64>,
    pub policy_gap: Option<f64>,
    pub success: bool,
    pub error: String,
}

/// One CSV row per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub instance: String,
    pub variant: String,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub median_queries: f64,
    pub median_wall_time: f64,
}

pub struct BenchOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

/// Median of a nonempty slice (mean of the middle two for even lengths).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn run_trial(
    inst: &DmdpInstance,
    auditor: &Auditor<'_>,
    label: &str,
    cell: &Cell,
    trial: usize,
    plan: &BenchPlan,
) -> Result<(ResultRow, RunRecord)> {
    let gamma = inst.gamma();
    let mut config = SolveConfig::new(cell.variant, cell.epsilon, cell.delta, cell.seed.wrapping_add(trial as u64));
    config.verify = plan.verify;
    if cell.variant == Variant::ProblemDependent {
        config.v_upper = Some(plan.v_upper.unwrap_or_else(|| max_v_upper(gamma)));
    }
    let report = solve(inst, &config)?;
    let v_pi = exact_policy_values(inst, &report.policy, auditor.oracle_tol())?;
    let value_gap = auditor.value_gap(&report.values);
    let policy_gap = max_norm_diff(auditor.v_star(), &v_pi);
    let mut record = RunRecord::from_report(label, gamma, &config, &report);
    record.value_gap = Some(value_gap);
    record.policy_gap = Some(policy_gap);
    let row = ResultRow {
        cell: cell.index,
        trial,
        instance: label.to_string(),
        variant: cell.variant.to_string(),
        epsilon: cell.epsilon,
        delta: cell.delta,
        gamma,
        seed: config.seed,
        queries: report.total_queries,
        wall_time: round_ms(report.wall_time),
        value_gap: Some(value_gap),
        policy_gap: Some(policy_gap),
        success: record.success().unwrap_or(false),
        error: String::new(),
    };
    Ok((row, record))
}

fn failed_row(label: &str, cell: &Cell, trial: usize, gamma: f64, err: &anyhow::Error) -> ResultRow {
    ResultRow {
        cell: cell.index,
        trial,
        instance: label.to_string(),
        variant: cell.variant.to_string(),
        epsilon: cell.epsilon,
        delta: cell.delta,
        gamma,
        seed: cell.seed.wrapping_add(trial as u64),
        queries: 0,
        wall_time: 0.0,
        value_gap: None,
        policy_gap: None,
        success: false,
        error: format!("{err:#}").replace(['\n', ','], " "),
    }
}

fn run_cell(plan: &BenchPlan, base: &Path, cell: &Cell, runs_dir: Option<&Path>) -> Result<Vec<ResultRow>> {
    let source = &plan.instances[cell.instance];
    let label = source.label();
    let gamma_hint = cell.gamma.unwrap_or(f64::NAN);
    let prepared = source.resolve(base).and_then(|inst| match cell.gamma {
        Some(g) => Ok(inst.with_gamma(g)?),
        None => Ok(inst),
    });
    let inst = match prepared {
        Ok(inst) => inst,
        Err(e) => return Ok((0..plan.trials).map(|t| failed_row(&label, cell, t, gamma_hint, &e)).collect()),
    };
    let auditor = match Auditor::new(&inst, DEFAULT_ORACLE_TOL) {
        Ok(a) => a,
        Err(e) => {
            let e = anyhow::Error::from(e);
            return Ok((0..plan.trials).map(|t| failed_row(&label, cell, t, inst.gamma(), &e)).collect());
        }
    };
    let mut rows = Vec::with_capacity(plan.trials);
    for trial in 0..plan.trials {
        match run_trial(&inst, &auditor, &label, cell, trial, plan) {
            Ok((row, record)) => {
                if let Some(dir) = runs_dir {
                    let path = dir.join(format!("c{:04}_t{:04}.rec", cell.index, trial));
                    fs::write(&path, record.to_text()).with_context(|| format!("writing {}", path.display()))?;
                }
                rows.push(row);
            }
            Err(e) => rows.push(failed_row(&label, cell, trial, inst.gamma(), &e)),
        }
    }
    Ok(rows)
}

pub fn summarize(cells: &[Cell], rows: &[ResultRow]) -> Vec<SummaryRow> {
    cells
        .iter()
        .map(|cell| {
            let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.cell == cell.index).collect();
            let ok: Vec<&&ResultRow> = mine.iter().filter(|r| r.error.is_empty()).collect();
            let successes = mine.iter().filter(|r| r.success).count();
            let first = mine.first();
            SummaryRow {
                cell: cell.index,
                instance: first.map(|r| r.instance.clone()).unwrap_or_default(),
                variant: cell.variant.to_string(),
                epsilon: cell.epsilon,
                delta: cell.delta,
                gamma: first.map(|r| r.gamma).unwrap_or(f64::NAN),
                seed: cell.seed,
                trials: mine.len(),
                successes,
                success_rate: successes as f64 / mine.len().max(1) as f64,
                median_queries: median(&ok.iter().map(|r| r.queries as f64).collect::<Vec<_>>()),
                median_wall_time: median(&ok.iter().map(|r| r.wall_time).collect::<Vec<_>>()),
            }
        })
        .collect()
}

/// Runs every cell on a pool of `threads` workers (all cores when `None`).
/// Rows come back ordered by cell, then trial. Relative instance paths
/// resolve against `base`. With `write`, results go to `output_dir`
/// (also relative to `base`): `results.csv`, `summary.csv`, `runs/*.rec`.
pub fn run_plan(plan: &BenchPlan, base: &Path, threads: Option<usize>, write: bool) -> Result<BenchOutput> {
    plan.validate()?;
    let cells = plan.cells()?;
    let out_dir = base.join(&plan.output_dir);
    let runs_dir = out_dir.join("runs");
    if write {
        fs::create_dir_all(&runs_dir).with_context(|| format!("creating {}", runs_dir.display()))?;
    }
    let runs = write.then_some(runs_dir.as_path());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    let per_cell: Vec<Vec<ResultRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| run_cell(plan, base, cell, runs))
            .collect::<Result<_>>()
    })?;
    let rows: Vec<ResultRow> = per_cell.into_iter().flatten().collect();
    let summary = summarize(&cells, &rows);
    if write {
        write_csv(&out_dir.join("results.csv"), &rows)?;
        write_csv(&out_dir.join("summary.csv"), &summary)?;
    }
    Ok(BenchOutput { rows, summary })
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Fixed-width text rendering of the summary table.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:>4}  {:<24} {:<17} {:>8} {:>6} {:>6} {:>7} {:>9} {:>14} {:>10}\n",
        "cell", "instance", "variant", "epsilon", "delta", "gamma", "trials", "success", "median_queries", "median_s"
    );
    for r in rows {
        out.push_str(&format!(
            "{:>4}  {:<24} {:<17} {:>8} {:>6} {:>6} {:>7} {:>8.0}% {:>14} {:>10.3}\n",
            r.cell,
            r.instance,
            r.variant,
            r.epsilon,
            r.delta,
            r.gamma,
            r.trials,
            100.0 * r.success_rate,
            r.median_queries,
            r.median_wall_time
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLAN: &str = r#"
        output_dir = "out"
        trials = 2
        variants = ["offline", "classic_vi"]
        epsilons = [0.5, 0.25]
        deltas = [0.1]
        seeds = [3]

        [[instances]]
        kind = "random_sparse"
        num_states = 5
        actions_per_state = 2
        support_size = 3
        gamma = 0.7
        seed = 1
    "#;

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn cells_enumerate_the_grid() {
        let plan = BenchPlan::from_toml(PLAN).unwrap();
        let cells = plan.cells().unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[1].epsilon, 0.25);
        assert_eq!(cells[2].variant, Variant::ClassicVi);
        assert!(cells.iter().enumerate().all(|(i, c)| c.index == i));
    }

    #[test]
    fn invalid_plans() {
        assert!(BenchPlan::from_toml(&PLAN.replace("trials = 2", "trials = 0")).is_err());
        assert!(BenchPlan::from_toml(&PLAN.replace("epsilons = [0.5, 0.25]", "epsilons = []")).is_err());
        assert!(BenchPlan::from_toml(&PLAN.replace("\"offline\"", "\"bogus\"")).is_err());
        assert!(BenchPlan::from_toml(&format!("extra = 1\n{PLAN}")).is_err());
    }

    #[test]
    fn bad_instance_rows_are_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let text = PLAN.replace(
            "[[instances]]\n        kind",
            "[[instances]]\n        path = \"missing.mdp\"\n\n        [[instances]]\n        kind",
        );
        let plan = BenchPlan::from_toml(&text).unwrap();
        let out = run_plan(&plan, dir.path(), Some(1), false).unwrap();
        assert_eq!(out.rows.len(), 16);
        assert!(out.rows[..8].iter().all(|r| !r.error.is_empty() && !r.success));
        assert!(out.rows[8..].iter().all(|r| r.error.is_empty()));
    }
}
