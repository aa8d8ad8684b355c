use proptest::prelude::*;
use strata_core::allocation::{bethel_allocate, compute_xi, evaluate, BethelParams, EvalOptions};
use strata_core::annealer::{anneal, SaConfig};
use strata_core::oracle::{bell, brute_force_optimum, enumerate_partitions, OracleError, MAX_ATOMIC};
use strata_core::partition::check_labels;
use strata_core::synthetic::{problem, SyntheticSpec};
use strata_core::{AtomicStratum, DomainProblem};

/// Bell numbers as row sums of Stirling numbers of the second kind.
fn bell_by_stirling(n: usize) -> u64 {
    let mut s = vec![vec![0u64; n + 1]; n + 1];
    s[0][0] = 1;
    for i in 1..=n {
        for k in 1..=i {
            s[i][k] = k as u64 * s[i - 1][k] + s[i - 1][k - 1];
        }
    }
    s[n].iter().sum()
}

fn is_rgs(labels: &[usize]) -> bool {
    let mut max = 0;
    for &l in labels {
        if l == 0 || l > max + 1 {
            return false;
        }
        max = max.max(l);
    }
    true
}

#[test]
fn partition_counts_match_bell_numbers() {
    assert_eq!(enumerate_partitions(3).unwrap().count(), 5);
    assert_eq!(enumerate_partitions(4).unwrap().count(), 15);
    assert_eq!(enumerate_partitions(8).unwrap().count(), 4140);
    for n in 1..=10 {
        let expected = bell_by_stirling(n);
        assert_eq!(enumerate_partitions(n).unwrap().count() as u64, expected, "L = {n}");
        assert_eq!(bell(n), expected);
    }
    assert_eq!(bell_by_stirling(12), 4_213_597);
    assert_eq!(bell(12), 4_213_597);
}

#[test]
fn every_partition_is_a_distinct_restricted_growth_string() {
    let all: Vec<Vec<usize>> = enumerate_partitions(7).unwrap().collect();
    assert!(all.iter().all(|p| is_rgs(p) && check_labels(p, 7).is_ok()));
    let mut sorted = all.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), all.len());
    assert_eq!(sorted, all, "lexicographic order");
}

#[test]
fn over_the_cap_is_refused() {
    assert!(matches!(enumerate_partitions(MAX_ATOMIC + 1), Err(OracleError::TooLarge(13))));
    let p = problem(&SyntheticSpec::new(13, 1), 0);
    assert!(brute_force_optimum(&p, &EvalOptions::default()).is_err());
}

#[test]
fn single_atomic_stratum_is_its_own_optimum() {
    let a = AtomicStratum::from_values(vec!["a".into()], "d", &[vec![1.0], vec![4.0], vec![9.0], vec![2.0]]);
    let p = DomainProblem::new("d", vec![a], vec![0.1]).unwrap();
    let r = brute_force_optimum(&p, &EvalOptions::default()).unwrap();
    assert_eq!(r.argmins, vec![vec![1]]);
    assert_eq!(r.evaluated, 1);
    let s = strata_core::pool_summaries(&p.atomic_strata, &[1], Default::default()).unwrap();
    let closed = bethel_allocate(&compute_xi(&s, &p.precision, &p.totals), None, &BethelParams::default());
    assert_eq!(r.cost, closed.total);
}

#[test]
fn identical_strata_are_best_merged() {
    let rows = [vec![3.0], vec![5.0], vec![8.0]];
    let a = AtomicStratum::from_values(vec!["a".into()], "d", &rows);
    let b = AtomicStratum::from_values(vec!["b".into()], "d", &rows);
    let p = DomainProblem::new("d", vec![a, b], vec![0.05]).unwrap();
    let opts = EvalOptions::default();
    let merged = evaluate(&[1, 1], &p, &opts, None).unwrap().cost;
    let split = evaluate(&[1, 2], &p, &opts, None).unwrap().cost;
    assert!(merged <= split);
    let r = brute_force_optimum(&p, &opts).unwrap();
    assert!(r.argmins.contains(&vec![1, 1]));
}

#[test]
fn argmins_all_share_the_minimum() {
    let p = problem(&SyntheticSpec::new(7, 2), 11);
    let opts = EvalOptions::default();
    let r = brute_force_optimum(&p, &opts).unwrap();
    assert!(!r.argmins.is_empty());
    let min = enumerate_partitions(7)
        .unwrap()
        .map(|l| evaluate(&l, &p, &opts, None).unwrap().cost)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(r.cost, min);
    for a in &r.argmins {
        let c = evaluate(a, &p, &opts, None).unwrap().cost;
        assert!((c - min).abs() <= 1e-12 * min);
    }
}

#[test]
fn small_anneal_finds_the_optimum() {
    let opts = EvalOptions::default();
    let p = problem(&SyntheticSpec::new(4, 2), 21);
    let optimum = brute_force_optimum(&p, &opts).unwrap().cost;
    let hits = (0..20)
        .filter(|&seed| {
            let cfg = SaConfig {
                maxit: 20,
                seq_len: 200,
                t_max: 0.01,
                decrement: 0.7,
                seed,
                ..SaConfig::default()
            };
            let out = anneal(&p, &[1, 2, 3, 4], &cfg, &opts).unwrap();
            (out.cost - optimum).abs() <= 1e-9 * optimum
        })
        .count();
    assert!(hits >= 19, "{hits}/20 seeds reached the optimum");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn annealing_never_beats_the_oracle(seed in 0u64..10_000, start in 1usize..=6) {
        let opts = EvalOptions::default();
        let p = problem(&SyntheticSpec::new(6, 2), seed);
        let optimum = brute_force_optimum(&p, &opts).unwrap().cost;
        let initial: Vec<usize> = (0..6).map(|i| i % start + 1).collect();
        let cfg = SaConfig { maxit: 5, seq_len: 100, t_max: 0.01, decrement: 0.7, seed, ..SaConfig::default() };
        let out = anneal(&p, &initial, &cfg, &opts).unwrap();
        prop_assert!(out.cost >= optimum * (1.0 - 1e-12), "{} < {}", out.cost, optimum);
    }
}
