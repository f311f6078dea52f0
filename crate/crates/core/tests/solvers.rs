use tvrvi::generative::GenerativeModel;
use tvrvi::instances::{generate, GeneratorSpec, InstanceKind};
use tvrvi::solvers::{max_v_upper, solve, solve_sample, SolveConfig, SolveReport, Variant};
use tvrvi::Auditor;

fn gaps(r: &SolveReport) -> (f64, f64) {
    let a = r.audit.unwrap();
    (a.value_gap, a.policy_gap)
}

#[test]
fn offline_and_classic_on_chain() {
    let inst = generate(&GeneratorSpec::new(InstanceKind::Chain, 5, 2, 0.9, 0)).unwrap();
    for seed in 0..20 {
        let r = solve(&inst, &SolveConfig::new(Variant::Offline, 1e-3, 0.1, seed).verified(true)).unwrap();
        let (v, p) = gaps(&r);
        assert!(v <= 1e-3 && p <= 1e-3, "seed {seed}: {v} {p}");
        assert!(r.invariants_hold() && r.halving_holds());
    }
    let r = solve(&inst, &SolveConfig::new(Variant::ClassicVi, 1e-3, 0.1, 0).verified(true)).unwrap();
    let (v, p) = gaps(&r);
    assert!(v <= 1e-3 && p <= 1e-3);
}

#[test]
fn offline_on_random_instance() {
    let inst = generate(&GeneratorSpec::new(InstanceKind::RandomSparse, 50, 4, 0.9, 21).with_support(8)).unwrap();
    let mut wins = 0;
    for seed in 0..20 {
        let r = solve(&inst, &SolveConfig::new(Variant::Offline, 0.05, 0.1, seed).verified(true)).unwrap();
        let (v, p) = gaps(&r);
        if v <= 0.05 && p <= 0.05 {
            wins += 1;
            // The policy is never worse than the values it was extracted with.
            assert!(p <= v + 1e-9);
        }
        assert_eq!(r.phases.len(), 8);
        assert_eq!(r.matrix_products, 8);
    }
    assert!(wins >= 18, "{wins}/20");
}

#[test]
fn sample_accuracy_and_epsilon_scaling() {
    let inst = generate(&GeneratorSpec::new(InstanceKind::RandomSparse, 30, 3, 0.9, 22).with_support(8)).unwrap();
    let auditor = Auditor::new(&inst, 1e-9).unwrap();
    let mut wins = 0;
    let mut queries = Vec::new();
    for seed in 0..20 {
        let model = GenerativeModel::build(&inst, seed);
        let cfg = SolveConfig::new(Variant::Sample, 0.2, 0.2, seed).verified(true);
        let r = solve_sample(&model, &cfg, Some(&auditor)).unwrap();
        let (v, p) = gaps(&r);
        wins += usize::from(v <= 0.2 && p <= 0.2);
        assert!(r.invariants_hold());
        assert_eq!(r.total_queries, model.query_count());
        queries.push(r.total_queries);
    }
    assert!(wins >= 16, "{wins}/20");
    let finer = solve(&inst, &SolveConfig::new(Variant::Sample, 0.1, 0.2, 0)).unwrap();
    let ratio = finer.total_queries as f64 / queries[0] as f64;
    assert!((2.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn problem_dependent_with_always_valid_bound_matches_sample() {
    let gamma = 0.8;
    let inst = generate(&GeneratorSpec::new(InstanceKind::RandomSparse, 15, 3, gamma, 23).with_support(5)).unwrap();
    for seed in 0..5 {
        let pd = SolveConfig::new(Variant::ProblemDependent, 0.2, 0.1, seed)
            .with_v_upper(max_v_upper(gamma))
            .verified(true);
        let r_pd = solve(&inst, &pd).unwrap();
        let r_s = solve(&inst, &SolveConfig::new(Variant::Sample, 0.2, 0.1, seed).verified(true)).unwrap();
        let (a, _) = gaps(&r_pd);
        let (b, _) = gaps(&r_s);
        assert!(a <= 0.2 && b <= 0.2 && (a - b).abs() <= 0.2);
        assert!(r_pd.invariants_hold());
    }
}

#[test]
fn problem_dependent_on_highly_mixing_instance() {
    let gamma = 0.9;
    let inst = generate(&GeneratorSpec::new(InstanceKind::HighlyMixing, 20, 3, gamma, 24).with_support(8)).unwrap();
    let mut wins = 0;
    for seed in 0..20 {
        let cfg = SolveConfig::new(Variant::ProblemDependent, 0.1, 0.1, seed)
            .with_v_upper(1.0 / (1.0 - gamma))
            .verified(true);
        let r = solve(&inst, &cfg).unwrap();
        let (v, p) = gaps(&r);
        wins += usize::from(v <= 0.1 && p <= 0.1);
    }
    assert!(wins >= 18, "{wins}/20");
}
