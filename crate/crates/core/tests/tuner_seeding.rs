use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use strata_core::allocation::{evaluate, EvalOptions};
use strata_core::partition::check_labels;
use strata_core::runner::Start;
use strata_core::seeding::{kmeans_solution, SeedingConfig};
use strata_core::synthetic::{problem, SyntheticSpec};
use strata_core::tuner::{
    get_param, lhs_design, local_proposal, swiss_ranges, tune, ParamRange, Phase, TuneBudget, TuneSetup,
};
use strata_core::SaConfig;

fn on_grid(r: &ParamRange, v: f64) -> bool {
    match r.increment {
        Some(inc) => {
            let k = (v - r.lower) / inc;
            (k - k.round()).abs() < 1e-9
        }
        None => true,
    }
}

fn in_range(r: &ParamRange, v: f64) -> bool {
    v >= r.lower && v <= r.upper && on_grid(r, v)
}

#[test]
fn one_point_per_decile() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let design = lhs_design(&[ParamRange::continuous("p_new", 0.0, 1.0)], 10, &mut rng);
    let mut seen = [0; 10];
    for row in &design {
        seen[(row[0] * 10.0).floor() as usize] += 1;
    }
    assert_eq!(seen, [1; 10]);
}

#[test]
fn design_respects_bounds_and_grids() {
    let ranges = swiss_ranges();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let design = lhs_design(&ranges, 10, &mut rng);
        assert_eq!(design.len(), 10);
        for row in &design {
            for (r, &v) in ranges.iter().zip(row) {
                assert!(in_range(r, v), "{} = {v}", r.name);
            }
            for _ in 0..5 {
                let next = local_proposal(&ranges, row, &mut rng);
                for (r, &v) in ranges.iter().zip(&next) {
                    assert!(in_range(r, v), "proposal {} = {v}", r.name);
                }
            }
        }
    }
}

fn small_ranges() -> Vec<ParamRange> {
    vec![
        ParamRange::discrete("maxit", 1.0, 4.0, 1.0),
        ParamRange::discrete("seq_len", 10.0, 50.0, 10.0),
        ParamRange::continuous("t_max", 1e-4, 0.05),
        ParamRange::continuous("decrement", 0.5, 0.95),
        ParamRange::continuous("l_max_pct", 0.0, 0.3),
        ParamRange::continuous("p_new", 0.0, 0.2),
    ]
}

fn setup(problems: &[strata_core::DomainProblem]) -> TuneSetup<'_> {
    TuneSetup {
        problems,
        start: Start::Singletons,
        base: SaConfig::default(),
        options: EvalOptions::default(),
        workers: 2,
        parallel_initial: false,
    }
}

#[test]
fn tuning_accounting_and_selection() {
    let problems = vec![problem(&SyntheticSpec::new(6, 2), 5)];
    let ranges = small_ranges();
    let out = tune(&setup(&problems), &ranges, TuneBudget::default(), 3).unwrap();
    assert_eq!(out.trace.len(), 20);
    assert_eq!(out.trace.iter().filter(|r| r.phase == Phase::Initial).count(), 10);
    let min = out.trace.iter().map(|r| r.cost).fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_cost, min);
    let mut lhs: Vec<f64> = out.trace[..10].iter().map(|r| r.cost).collect();
    lhs.sort_by(f64::total_cmp);
    assert!(out.best_cost <= (lhs[4] + lhs[5]) / 2.0);
    for rec in &out.trace {
        for r in &ranges {
            assert!(in_range(r, get_param(&rec.config, &r.name).unwrap()));
        }
    }

    let two = tune(&setup(&problems), &ranges, TuneBudget { n_initial: 1, n_iterations: 1 }, 3).unwrap();
    assert_eq!(two.trace.len(), 2);
}

#[test]
fn collapsed_ranges_give_one_configuration() {
    let problems = vec![problem(&SyntheticSpec::new(6, 1), 6), problem(&SyntheticSpec::new(5, 1), 7)];
    let ranges: Vec<ParamRange> = vec![
        ParamRange::discrete("maxit", 3.0, 3.0, 1.0),
        ParamRange::discrete("seq_len", 20.0, 20.0, 10.0),
        ParamRange::continuous("t_max", 0.01, 0.01),
        ParamRange::continuous("decrement", 0.8, 0.8),
    ];
    let out = tune(&setup(&problems), &ranges, TuneBudget { n_initial: 3, n_iterations: 2 }, 0).unwrap();
    let first = &out.trace[0];
    assert!(out.trace.iter().all(|r| r.config == first.config && r.cost == first.cost));
    assert_eq!(out.best_cost, first.cost);
}

#[test]
fn failed_configurations_score_infinity() {
    let problems = vec![problem(&SyntheticSpec::new(5, 1), 1)];
    // t_max = 0 is below t_min and fails validation
    let ranges = vec![ParamRange::continuous("t_max", 0.0, 0.0), ParamRange::discrete("seq_len", 5.0, 5.0, 1.0)];
    let out = tune(&setup(&problems), &ranges, TuneBudget { n_initial: 1, n_iterations: 1 }, 0).unwrap();
    assert!(out.trace.iter().all(|r| r.cost == f64::INFINITY));
}

#[test]
fn bad_budget_and_unknown_names_are_rejected() {
    let problems = vec![problem(&SyntheticSpec::new(4, 1), 1)];
    let s = setup(&problems);
    assert!(tune(&s, &small_ranges(), TuneBudget { n_initial: 0, n_iterations: 1 }, 0).is_err());
    let bogus = vec![ParamRange::continuous("gamma", 0.0, 1.0)];
    assert!(tune(&s, &bogus, TuneBudget::default(), 0).is_err());
    let uneven = vec![ParamRange::discrete("maxit", 1.0, 10.0, 4.0)];
    assert!(tune(&s, &uneven, TuneBudget::default(), 0).is_err());
}

#[test]
fn k_equal_to_l_gives_singletons() {
    let p = problem(&SyntheticSpec::new(9, 2), 3);
    let out = kmeans_solution(&p, &SeedingConfig::fixed(9), 4, &EvalOptions::default()).unwrap();
    let identity: Vec<usize> = (1..=9).collect();
    assert_eq!(out.labels, identity);
    let direct = evaluate(&identity, &p, &EvalOptions::default(), None).unwrap();
    assert_eq!(out.evaluation.cost, direct.cost);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn seeding_selects_the_cheapest_candidate(seed in 0u64..10_000, l in 2usize..40) {
        let p = problem(&SyntheticSpec::new(l, 2), seed);
        let cfg = SeedingConfig { restarts: 3, ..SeedingConfig::default() };
        let out = kmeans_solution(&p, &cfg, seed, &EvalOptions::default()).unwrap();
        prop_assert!(check_labels(&out.labels, l).is_ok());
        prop_assert!(out.candidates.iter().all(|(_, c)| out.evaluation.cost <= *c));
        let (k_min, k_max) = cfg.range(l);
        prop_assert_eq!(out.candidates.len(), k_max - k_min + 1);
        prop_assert_eq!(out.k, out.labels.iter().copied().max().unwrap());
        let again = kmeans_solution(&p, &cfg, seed, &EvalOptions::default()).unwrap();
        prop_assert_eq!(again.labels, out.labels);
        prop_assert_eq!(again.evaluation.cost.to_bits(), out.evaluation.cost.to_bits());
    }
}
