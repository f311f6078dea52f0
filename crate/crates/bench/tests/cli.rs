use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tvrvi::engine::schedule;
use tvrvi::solvers::{offset_eta, phase_count, sample_budget};
use tvrvi_bench::plan::{read_csv, ResultRow, SummaryRow};
use tvrvi_bench::record::RunRecord;

fn tvrvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvrvi")).args(args).output().expect("spawn tvrvi")
}

fn ok(args: &[&str]) -> String {
    let out = tvrvi(args);
    assert!(
        out.status.success(),
        "tvrvi {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_loadable_and_reproducible_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mdp");
    let b = dir.path().join("b.mdp");
    let flags = ["--kind", "deterministic", "--states", "5", "--actions", "2", "--gamma", "0.9", "--seed", "1"];
    for out in [&a, &b] {
        let mut args = vec!["gen"];
        args.extend(flags);
        args.extend(["--out", path_str(out)]);
        ok(&args);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(a.with_extension("spec")).unwrap(), fs::read(b.with_extension("spec")).unwrap());
    let inst = tvrvi_bench::load_instance(&a).unwrap();
    assert_eq!(inst.num_states(), 5);
    assert!((0..inst.a_tot()).all(|p| inst.row(p).len() == 1));
    let spec = tvrvi::instances::GeneratorSpec::from_kv(&fs::read_to_string(a.with_extension("spec")).unwrap()).unwrap();
    assert_eq!(tvrvi::instances::generate(&spec).unwrap(), inst);
}

#[test]
fn gen_without_gamma_is_a_usage_error() {
    let out = tvrvi(&["gen", "--kind", "chain", "--states", "3", "--actions", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--gamma"));
}

#[test]
fn solve_on_missing_file_fails() {
    let out = tvrvi(&["solve-offline", "--instance", "/nonexistent/x.mdp", "--epsilon", "0.1"]);
    assert!(!out.status.success());
}

#[test]
fn every_variant_solves_the_self_loop() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("loop.mdp");
    fs::write(&inst, "1 0.5\n0 0 1 1 0 1\n").unwrap();
    let cases: [&[&str]; 4] = [
        &["solve-offline"],
        &["solve-sample"],
        &["solve-pd", "--v-upper", "0.001"],
        &["classic-vi"],
    ];
    for (i, case) in cases.iter().enumerate() {
        let rec_path = dir.path().join(format!("r{i}.rec"));
        let mut args = case.to_vec();
        args.extend(["--instance", path_str(&inst), "--epsilon", "0.01", "--verify", "--out", path_str(&rec_path)]);
        let line = ok(&args);
        assert!(line.contains("success=true"), "{line}");
        let rec = RunRecord::parse(&fs::read_to_string(&rec_path).unwrap()).unwrap();
        assert!((rec.values[0] - 2.0).abs() <= 0.01);
        assert_eq!(rec.invariants_hold, Some(true));
    }
}

#[test]
fn offline_chain_is_accurate_across_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("chain.mdp");
    ok(&["gen", "--kind", "chain", "--states", "5", "--actions", "2", "--gamma", "0.8", "--out", path_str(&inst)]);
    for seed in 0..5 {
        let rec = dir.path().join("r.rec");
        let seed = seed.to_string();
        ok(&[
            "solve-offline", "--instance", path_str(&inst), "--epsilon", "0.01", "--seed", &seed, "--verify", "--out",
            path_str(&rec),
        ]);
        let rec = RunRecord::parse(&fs::read_to_string(&rec).unwrap()).unwrap();
        assert!(rec.value_gap.unwrap() <= 0.01 && rec.policy_gap.unwrap() <= 0.01);
        assert_eq!(rec.halving_holds, Some(true));
    }
}

#[test]
fn sample_queries_match_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("sparse.mdp");
    ok(&[
        "gen", "--kind", "random_sparse", "--states", "8", "--actions", "2", "--support", "3", "--gamma", "0.7",
        "--seed", "4", "--out", path_str(&inst),
    ]);
    let rec_path = dir.path().join("r.rec");
    let (epsilon, delta, gamma, a_tot) = (0.3, 0.2, 0.7, 16usize);
    ok(&[
        "solve-sample", "--instance", path_str(&inst), "--epsilon", "0.3", "--delta", "0.2", "--out",
        path_str(&rec_path),
    ]);
    let rec = RunRecord::parse(&fs::read_to_string(&rec_path).unwrap()).unwrap();

    let k = phase_count(gamma, epsilon);
    let inner = schedule(gamma, delta / (2.0 * k as f64), a_tot).unwrap();
    let mut alpha = 1.0 / (1.0 - gamma);
    let mut want = 0u64;
    for phase in &rec.phases {
        let n = sample_budget(gamma, alpha, a_tot, k, delta);
        match phase.budget {
            tvrvi::solvers::PhaseBudget::Sampled { samples, eta, .. } => {
                assert_eq!(samples, n);
                assert_eq!(eta, offset_eta(n, a_tot, k, delta));
            }
            other => panic!("unexpected budget {other:?}"),
        }
        want += n * a_tot as u64 + inner.epochs as u64 * inner.samples * a_tot as u64;
        alpha /= 2.0;
    }
    assert_eq!(rec.phases.len(), k);
    assert_eq!(rec.total_queries, want);
}

#[test]
fn verify_recomputes_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("m.mdp");
    ok(&["gen", "--kind", "highly_mixing", "--states", "6", "--actions", "3", "--gamma", "0.8", "--out", path_str(&inst)]);
    let rec = dir.path().join("r.rec");
    let checked = dir.path().join("v.rec");
    ok(&["classic-vi", "--instance", path_str(&inst), "--epsilon", "0.001", "--out", path_str(&rec)]);
    assert_eq!(RunRecord::parse(&fs::read_to_string(&rec).unwrap()).unwrap().value_gap, None);
    let line = ok(&["verify", "--instance", path_str(&inst), "--record", path_str(&rec), "--out", path_str(&checked)]);
    assert!(line.contains("success=true"), "{line}");
    let v = RunRecord::parse(&fs::read_to_string(&checked).unwrap()).unwrap();
    assert!(v.value_gap.unwrap() <= 0.001);
}

fn write_plan(dir: &Path, body: &str) -> std::path::PathBuf {
    let plan = dir.join("plan.toml");
    fs::write(&plan, body).unwrap();
    plan
}

#[test]
fn single_cell_plan_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(
        dir.path(),
        r#"
output_dir = "out"
trials = 1
variants = ["sample"]
epsilons = [0.5]
deltas = [0.1]
seeds = [7]

[[instances]]
kind = "random_sparse"
num_states = 6
actions_per_state = 2
support_size = 3
gamma = 0.6
"#,
    );
    let table = ok(&["bench", "--plan", path_str(&plan), "--threads", "1"]);
    assert!(table.contains("median_queries"));
    let csv = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let rows: Vec<ResultRow> = read_csv(&dir.path().join("out/results.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].error.is_empty());
    let rec = RunRecord::parse(&fs::read_to_string(dir.path().join("out/runs/c0000_t0000.rec")).unwrap()).unwrap();
    assert_eq!(rec.total_queries, rows[0].queries);
    assert_eq!(rec.value_gap, rows[0].value_gap);
}

#[test]
fn bench_output_independent_of_threads() {
    let body = r#"
output_dir = "out"
trials = 2
variants = ["offline", "sample", "problem_dependent", "classic_vi"]
epsilons = [0.5, 0.3]
deltas = [0.2]
seeds = [1, 2]
gammas = [0.6]

[[instances]]
kind = "worst_case_spread"
num_states = 5
actions_per_state = 2
gamma = 0.9
"#;
    let mut results = Vec::new();
    for threads in ["1", "4"] {
        let dir = tempfile::tempdir().unwrap();
        let plan = write_plan(dir.path(), body);
        ok(&["bench", "--plan", path_str(&plan), "--threads", threads]);
        let mut rows: Vec<ResultRow> = read_csv(&dir.path().join("out/results.csv")).unwrap();
        let summary: Vec<SummaryRow> = read_csv(&dir.path().join("out/summary.csv")).unwrap();
        assert_eq!(summary.len(), 16);
        assert!(rows.windows(2).all(|w| (w[0].cell, w[0].trial) < (w[1].cell, w[1].trial)));
        rows.iter_mut().for_each(|r| r.wall_time = 0.0);
        results.push(rows);
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(results[0].len(), 32);
    assert!(results[0].iter().all(|r| r.error.is_empty() && r.gamma == 0.6));
}

#[test]
fn bench_rejects_bad_plan() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), "output_dir = \"out\"\ntrials = 0\n");
    assert!(!tvrvi(&["bench", "--plan", path_str(&plan)]).status.success());
}
