use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use tvrvi::instances::{GeneratorSpec, InstanceKind, RewardLaw};
use tvrvi::solvers::{SolveConfig, Variant, DEFAULT_ORACLE_TOL};
use tvrvi_bench::plan::{render_summary, run_plan, BenchPlan};
use tvrvi_bench::{cmd_gen, cmd_solve, cmd_verify};

#[derive(Parser)]
#[command(name = "tvrvi", version, about = "Truncated variance-reduced value iteration toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file and its companion spec file.
    Gen(GenArgs),
    /// Solve with exact offsets computed from the transition matrix.
    SolveOffline(SolveArgs),
    /// Solve through the generative model with worst-case budgets.
    SolveSample(SolveArgs),
    /// Solve through the generative model with variance-aware budgets.
    SolvePd(PdArgs),
    /// Classic value iteration baseline.
    ClassicVi(SolveArgs),
    /// Recompute oracle gaps for a stored run record.
    Verify(VerifyArgs),
    /// Run a benchmark plan.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: InstanceKind,
    #[arg(long)]
    states: usize,
    #[arg(long)]
    actions: usize,
    /// Nonzeros per row (defaults to min(states, 8)).
    #[arg(long)]
    support: Option<usize>,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `uniform01` or `bernoulli(p)`.
    #[arg(long, default_value = "uniform01", value_parser = parse_law)]
    rewards: RewardLaw,
    /// Instance path; the spec goes to the same path with a `.spec` extension.
    #[arg(long, default_value = "instance.mdp")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Audit every epoch and phase against the exact oracle.
    #[arg(long)]
    verify: bool,
    #[arg(long, default_value_t = DEFAULT_ORACLE_TOL)]
    oracle_tol: f64,
    /// Record file to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PdArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Upper bound V on the variance functional.
    #[arg(long)]
    v_upper: f64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    record: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ORACLE_TOL)]
    oracle_tol: f64,
    /// Write the record with the recomputed gaps here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_kind(s: &str) -> Result<InstanceKind, String> {
    s.parse().map_err(|e: tvrvi::Error| e.to_string())
}

fn parse_law(s: &str) -> Result<RewardLaw, String> {
    s.parse().map_err(|e: tvrvi::Error| e.to_string())
}

fn solve(args: SolveArgs, variant: Variant, v_upper: Option<f64>) -> Result<()> {
    let mut config = SolveConfig::new(variant, args.epsilon, args.delta, args.seed).verified(args.verify);
    config.oracle_tol = args.oracle_tol;
    config.v_upper = v_upper;
    let record = cmd_solve(&args.instance, &config, args.out.as_deref())?;
    println!("{}", record.summary_line());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => {
            let spec = GeneratorSpec {
                kind: a.kind,
                num_states: a.states,
                actions_per_state: a.actions,
                support_size: a.support.unwrap_or(a.states.min(8)),
                gamma: a.gamma,
                seed: a.seed,
                reward_law: a.rewards,
            };
            let spec_out = cmd_gen(&spec, &a.out)?;
            println!("wrote {} and {}", a.out.display(), spec_out.display());
        }
        Command::SolveOffline(a) => solve(a, Variant::Offline, None)?,
        Command::SolveSample(a) => solve(a, Variant::Sample, None)?,
        Command::SolvePd(a) => solve(a.solve, Variant::ProblemDependent, Some(a.v_upper))?,
        Command::ClassicVi(a) => solve(a, Variant::ClassicVi, None)?,
        Command::Verify(a) => {
            let record = cmd_verify(&a.instance, &a.record, a.oracle_tol)?;
            if let Some(out) = &a.out {
                std::fs::write(out, record.to_text())?;
            }
            println!("{}", record.summary_line());
        }
        Command::Bench(a) => {
            let text = std::fs::read_to_string(&a.plan)?;
            let plan = BenchPlan::from_toml(&text)?;
            let base = a.plan.parent().map(PathBuf::from).unwrap_or_default();
            let out = run_plan(&plan, &base, a.threads, true)?;
            print!("{}", render_summary(&out.summary));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
