mod common;

use std::path::Path;
use std::process::Command;

use common::{setup, SMALL_ANNEALER};
use strata_cli::commands::{build_strata, read_strata, run_optimize, OptimizeSettings};
use strata_cli::report::{REPORT_FILE, TIMING_FILE};
use strata_cli::{report_compare, CliError, RunConfig};
use tempfile::tempdir;

fn strata(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_strata"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn optimize_writes_every_output_and_is_byte_stable() {
    let dir = tempdir().unwrap();
    let cfg = RunConfig::load(setup(dir.path(), &[6, 9, 4], SMALL_ANNEALER, "")).unwrap();
    let problems = cfg.problems().unwrap();
    assert_eq!(problems.len(), 3);

    let mut reports = Vec::new();
    for (run, workers) in [("a", 1), ("b", 1), ("c", 3)] {
        let out = dir.path().join(run);
        let report = run_optimize(&problems, &OptimizeSettings::from_config(&cfg, workers), &out).unwrap();
        assert!(report.failures.is_empty());
        assert_eq!(report.n_saa_sol, 3 * 4 * 60);
        assert_eq!(report.solutions_evaluated, report.n_saa_sol);
        for d in &problems {
            let stem = strata_core::frame::domain_file_stem(&d.domain);
            for suffix in ["_partition.csv", "_allocation.json", "_trace.csv"] {
                assert!(out.join(format!("{stem}{suffix}")).exists(), "{stem}{suffix}");
            }
        }
        assert!(out.join(TIMING_FILE).exists());
        assert!(out.join("summary.json").exists());
        let per = report.domain_seconds() / report.n_saa_sol as f64;
        assert!((report.seconds_per_solution() - per).abs() <= 1e-15);
        reports.push(read(out.join(REPORT_FILE)));
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2], "worker count changed the report");
    assert!(reports[0].starts_with("# root_seed=17 domains=3 maxit=4 seq_len=60 n_saa_sol=720\n"));
    assert!(reports[0].lines().last().unwrap().starts_with("TOTAL,"));
}

#[test]
fn reported_solution_counts() {
    let dir = tempdir().unwrap();
    let annealer = r#"{"maxit": 10, "seq_len": 3000, "seed": 3}"#;
    let cfg = RunConfig::load(setup(dir.path(), &[3; 7], annealer, "")).unwrap();
    let problems = cfg.problems().unwrap();
    assert_eq!(problems.len(), 7);
    let report = run_optimize(&problems, &OptimizeSettings::from_config(&cfg, 4), &dir.path().join("o")).unwrap();
    assert_eq!(report.n_saa_sol, 210_000);

    let one = RunConfig::load(setup(dir.path(), &[3], r#"{"maxit": 1, "seq_len": 1}"#, "")).unwrap();
    let report = run_optimize(&one.problems().unwrap(), &OptimizeSettings::from_config(&one, 1), &dir.path().join("p"))
        .unwrap();
    assert_eq!(report.n_saa_sol, 1);
}

#[test]
fn strata_round_trip_through_json() {
    let dir = tempdir().unwrap();
    let cfg = RunConfig::load(setup(dir.path(), &[5, 7], SMALL_ANNEALER, "")).unwrap();
    let problems = cfg.problems().unwrap();
    let index = build_strata(&problems, &dir.path().join("s")).unwrap();
    assert_eq!(index.iter().map(|e| e.atomic_strata).collect::<Vec<_>>(), vec![5, 7]);
    assert_eq!(read_strata(&dir.path().join("s")).unwrap(), problems);
}

fn write_report(dir: &Path, rows: &[(&str, f64)], seconds: &[(&str, f64)]) {
    std::fs::create_dir_all(dir).unwrap();
    let mut r = String::from("# root_seed=0\ndomain,sample_size\n");
    for (d, v) in rows {
        r += &format!("{d},{v}\n");
    }
    r += &format!("TOTAL,{}\n", rows.iter().map(|x| x.1).sum::<f64>());
    std::fs::write(dir.join(REPORT_FILE), r).unwrap();
    let mut t = String::from("domain,seconds,seconds_per_solution\n");
    for (d, v) in seconds {
        t += &format!("{d},{v},0\n");
    }
    t += &format!("TOTAL,{},0\n", seconds.iter().map(|x| x.1).sum::<f64>());
    std::fs::write(dir.join(TIMING_FILE), t).unwrap();
}

#[test]
fn compare_ratios() {
    let dir = tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    write_report(&a, &[("R0", 10.0), ("R1", 30.0)], &[("R0", 1.0), ("R1", 2.0)]);
    write_report(&b, &[("R0", 20.0), ("R1", 60.0)], &[("R0", 4.0), ("R1", 4.0)]);
    write_report(&c, &[("R0", 10.0), ("R9", 30.0)], &[]);

    let same = report_compare(&a, &a).unwrap();
    for line in same.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "1.0000");
        assert_eq!(cols[2], "1.0000");
    }
    let half = report_compare(&a, &b).unwrap();
    let lines: Vec<&str> = half.lines().collect();
    assert_eq!(lines[0], "domain,sample_size_ratio,execution_time_ratio,total_execution_time_ratio");
    assert_eq!(lines[1], "R0,0.5000,0.2500,");
    assert_eq!(lines[2], "R1,0.5000,0.5000,");
    assert_eq!(lines[3], "TOTAL,0.5000,0.3750,");

    let err = report_compare(&a, &c).unwrap_err();
    assert!(matches!(&err, CliError::Input(m) if m.contains("R1") && m.contains("R9")), "{err}");
}

#[test]
fn binary_pipeline() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    setup(d, &[5, 8], SMALL_ANNEALER, "");

    let o = strata(&["build-strata", "--config", "config.json", "--out", "strata"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("strata/domains.json").exists());

    let o = strata(&["seed", "--config", "config.json", "--strata", "strata", "--out", "seed"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("seed/domain_R0_partition.csv").exists());

    let o = strata(
        &["optimize", "--config", "config.json", "--strata", "strata", "--start", "seed", "--workers", "2", "--out", "run"],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(o.status.code(), Some(0));
    let report = read(d.join("run/report.csv"));
    assert!(report.contains("n_saa_sol=480"));

    let o = strata(
        &["evaluate", "--config", "config.json", "--domain", "R1", "--partition", "run/domain_R1_partition.csv", "--out", "eval"],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ev: serde_json::Value = serde_json::from_str(&read(d.join("eval/domain_R1_allocation.json"))).unwrap();
    let run: serde_json::Value = serde_json::from_str(&read(d.join("run/domain_R1_allocation.json"))).unwrap();
    assert_eq!(ev["sample_size"], run["sample_size"]);

    let o = strata(&["brute-force", "--config", "config.json", "--domain", "R0", "--out", "bf"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bf: serde_json::Value = serde_json::from_str(&read(d.join("bf/domain_R0_optimum.json"))).unwrap();
    assert_eq!(bf["partitions_evaluated"], 52);
    let best = bf["sample_size"].as_f64().unwrap();
    let found = run_sample_size(&report, "R0");
    assert!(found >= best, "{found} < {best}");

    let o = strata(&["compare", "run", "run", "--out", "cmp.csv"], d);
    assert!(o.status.success());
    assert!(read(d.join("cmp.csv")).contains("TOTAL,1.0000,1.0000,"));
}

fn run_sample_size(report: &str, domain: &str) -> f64 {
    report
        .lines()
        .find(|l| l.starts_with(&format!("{domain},")))
        .and_then(|l| l.split(',').nth(4))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    setup(d, &[4], SMALL_ANNEALER, "");
    let o = strata(&["optimize", "--config", "missing.json"], d);
    assert_eq!(o.status.code(), Some(2));
    let o = strata(&["brute-force", "--config", "config.json", "--domain", "nowhere"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("R0"));
    std::fs::write(d.join("frame.csv"), "REG,cell,y1\nR0,a,1\n").unwrap();
    let o = strata(&["optimize", "--config", "config.json"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("y2"));
}

#[test]
fn domain_failure_exits_with_three_and_keeps_the_rest() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    // three clusters cannot be formed from two atomic strata
    setup(d, &[6, 2], SMALL_ANNEALER, r#", "seeding": {"k_min": 3, "k_max": 3, "restarts": 2}"#);
    let cfg = read(d.join("config.json")).replacen(r#""seeding": {"restarts": 3},"#, "", 1);
    std::fs::write(d.join("config.json"), cfg).unwrap();
    let o = strata(&["optimize", "--config", "config.json", "--out", "run"], d);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let failures: serde_json::Value = serde_json::from_str(&read(d.join("run/failures.json"))).unwrap();
    assert_eq!(failures[0]["domain"], "R1");
    assert!(d.join("run/domain_R0_partition.csv").exists());
    assert!(!d.join("run/domain_R1_partition.csv").exists());
    assert!(read(d.join("run/report.csv")).contains("\nR0,"));
}
