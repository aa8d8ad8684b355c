//! Output files: per-domain partitions, allocations and traces, the run
//! report, timings, and A/B comparison tables.
//!
//! `report.csv` carries no timings so that repeated runs with the same seed
//! produce identical bytes; wall times go to `timing.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use strata_core::frame::domain_file_stem;
use strata_core::partition::key_string;
use strata_core::{DomainProblem, Evaluation};

use crate::CliError;

pub const REPORT_FILE: &str = "report.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FAILURES_FILE: &str = "failures.json";
pub const TUNING_FILE: &str = "tuning.csv";
pub const TOTAL_ROW: &str = "TOTAL";

pub fn partition_file(domain: &str) -> String {
    format!("{}_partition.csv", domain_file_stem(domain))
}

pub fn allocation_file(domain: &str) -> String {
    format!("{}_allocation.json", domain_file_stem(domain))
}

pub fn trace_file(domain: &str) -> String {
    format!("{}_trace.csv", domain_file_stem(domain))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumAllocation {
    pub label: usize,
    pub count: u64,
    pub n: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub atomic_strata: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub domain: String,
    pub sample_size: f64,
    pub converged: bool,
    pub iterations: usize,
    pub alphas: Vec<f64>,
    pub targets: Vec<String>,
    pub precision: Vec<f64>,
    pub cv: Vec<f64>,
    pub strata: Vec<StratumAllocation>,
}

impl AllocationReport {
    pub fn new(problem: &DomainProblem, eval: &Evaluation) -> Self {
        AllocationReport {
            domain: problem.domain.clone(),
            sample_size: eval.cost,
            converged: eval.allocation.converged,
            iterations: eval.allocation.iterations,
            alphas: eval.allocation.alphas.clone(),
            targets: problem.target_names.clone(),
            precision: problem.precision.clone(),
            cv: eval.cv(problem),
            strata: eval
                .summaries
                .iter()
                .zip(&eval.allocation.n)
                .enumerate()
                .map(|(h, (s, &n))| StratumAllocation {
                    label: h + 1,
                    count: s.count,
                    n,
                    mean: s.mean.clone(),
                    variance: s.variance.clone(),
                    atomic_strata: s
                        .members
                        .iter()
                        .map(|&m| key_string(&problem.atomic_strata[m].key))
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Output(e.to_string()))?;
        write_text(path, &(text + "\n"))
    }
}

/// One optimized domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub index: usize,
    pub domain: String,
    pub seed: u64,
    pub atomic_strata: usize,
    pub strata: usize,
    pub sample_size: f64,
    pub initial_sample_size: f64,
    pub solutions_evaluated: u64,
    pub converged: bool,
    pub precision: Vec<f64>,
    pub cv: Vec<f64>,
    pub seconds: f64,
    pub labels: Vec<usize>,
}

impl DomainReport {
    /// Largest `cv_g − ε_g`; non-positive when every constraint holds.
    pub fn worst_excess(&self) -> f64 {
        self.cv
            .iter()
            .zip(&self.precision)
            .map(|(c, e)| c - e)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub domain: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub root_seed: u64,
    pub maxit: usize,
    pub seq_len: usize,
    pub domains: Vec<DomainReport>,
    pub failures: Vec<Failure>,
    /// `D · maxit · J`.
    pub n_saa_sol: u64,
    pub total_sample_size: f64,
    pub solutions_evaluated: u64,
    pub wall_seconds: f64,
}

impl OptimizeReport {
    pub fn domain_seconds(&self) -> f64 {
        self.domains.iter().map(|d| d.seconds).sum()
    }

    /// Summed per-domain time divided by `N_SAAsol`.
    pub fn seconds_per_solution(&self) -> f64 {
        if self.n_saa_sol == 0 {
            0.0
        } else {
            self.domain_seconds() / self.n_saa_sol as f64
        }
    }

    pub fn report_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# root_seed={} domains={} maxit={} seq_len={} n_saa_sol={}",
            self.root_seed,
            self.domains.len() + self.failures.len(),
            self.maxit,
            self.seq_len,
            self.n_saa_sol
        );
        s.push_str("domain,seed,atomic_strata,strata,sample_size,initial_sample_size,solutions_evaluated,converged,max_cv_excess\n");
        for d in &self.domains {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{:e}",
                csv_field(&d.domain),
                d.seed,
                d.atomic_strata,
                d.strata,
                d.sample_size,
                d.initial_sample_size,
                d.solutions_evaluated,
                d.converged,
                d.worst_excess()
            );
        }
        let _ = writeln!(
            s,
            "{TOTAL_ROW},,{},{},{},{},{},{},{:e}",
            self.domains.iter().map(|d| d.atomic_strata).sum::<usize>(),
            self.domains.iter().map(|d| d.strata).sum::<usize>(),
            self.total_sample_size,
            self.domains.iter().map(|d| d.initial_sample_size).sum::<f64>(),
            self.solutions_evaluated,
            self.domains.iter().all(|d| d.converged),
            self.domains.iter().map(|d| d.worst_excess()).fold(f64::NEG_INFINITY, f64::max)
        );
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("domain,seconds,seconds_per_solution\n");
        for d in &self.domains {
            let per = if d.solutions_evaluated == 0 {
                0.0
            } else {
                d.seconds / d.solutions_evaluated as f64
            };
            let _ = writeln!(s, "{},{:.6},{:e}", csv_field(&d.domain), d.seconds, per);
        }
        let _ = writeln!(s, "{TOTAL_ROW},{:.6},{:e}", self.domain_seconds(), self.seconds_per_solution());
        let _ = writeln!(s, "WALL,{:.6},", self.wall_seconds);
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

/// `domain -> value` for one numeric column, plus the TOTAL row if present.
fn read_column(path: &Path, column: &str) -> Result<(BTreeMap<String, f64>, Option<f64>), CliError> {
    let text = read_text(path)?;
    let mut r = csv_reader(&text);
    let bad = |m: String| CliError::Input(format!("{}: {m}", path.display()));
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| bad(format!("no `{column}` column")))?;
    let mut rows = BTreeMap::new();
    let mut total = None;
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let name = rec.get(0).unwrap_or("").to_string();
        let v: f64 = rec
            .get(idx)
            .unwrap_or("")
            .parse()
            .map_err(|_| bad(format!("bad `{column}` for {name}")))?;
        match name.as_str() {
            TOTAL_ROW => total = Some(v),
            "WALL" => {}
            _ => {
                rows.insert(name, v);
            }
        }
    }
    Ok((rows, total))
}

fn ratio(a: f64, b: f64) -> String {
    if b == 0.0 {
        if a == 0.0 { "1.0000".into() } else { "inf".into() }
    } else {
        format!("{:.4}", a / b)
    }
}

/// A/B ratios of sample size and execution time per domain, with a total
/// row. Total execution time (from `tuning.csv`) is compared when both runs
/// have one.
pub fn report_compare(a: &Path, b: &Path) -> Result<String, CliError> {
    let (sa, ta) = read_column(&a.join(REPORT_FILE), "sample_size")?;
    let (sb, tb) = read_column(&b.join(REPORT_FILE), "sample_size")?;
    let only_a: Vec<&String> = sa.keys().filter(|k| !sb.contains_key(*k)).collect();
    let only_b: Vec<&String> = sb.keys().filter(|k| !sa.contains_key(*k)).collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(CliError::Input(format!(
            "runs cover different domains; only in A: {only_a:?}; only in B: {only_b:?}"
        )));
    }
    let timing = |dir: &Path| {
        let p = dir.join(TIMING_FILE);
        p.exists().then(|| read_column(&p, "seconds")).transpose()
    };
    let (xa, xb) = (timing(a)?, timing(b)?);
    let tuning = |dir: &Path| -> Result<Option<f64>, CliError> {
        let p = dir.join(TUNING_FILE);
        if !p.exists() {
            return Ok(None);
        }
        let text = read_text(&p)?;
        let mut r = csv_reader(&text);
        let headers = r.headers().map_err(|e| CliError::Input(e.to_string()))?.clone();
        let idx = headers
            .iter()
            .position(|h| h == "seconds")
            .ok_or_else(|| CliError::Input(format!("{}: no `seconds` column", p.display())))?;
        let mut sum = 0.0;
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::Input(e.to_string()))?;
            sum += rec.get(idx).unwrap_or("0").parse::<f64>().unwrap_or(0.0);
        }
        Ok(Some(sum))
    };
    let (ua, ub) = (tuning(a)?, tuning(b)?);

    let mut out = String::from("domain,sample_size_ratio,execution_time_ratio,total_execution_time_ratio\n");
    for (name, va) in &sa {
        let time = match (&xa, &xb) {
            (Some((ra, _)), Some((rb, _))) => match (ra.get(name), rb.get(name)) {
                (Some(x), Some(y)) => ratio(*x, *y),
                _ => String::new(),
            },
            _ => String::new(),
        };
        let _ = writeln!(out, "{},{},{},", csv_field(name), ratio(*va, sb[name]), time);
    }
    let total_a = ta.unwrap_or_else(|| sa.values().sum());
    let total_b = tb.unwrap_or_else(|| sb.values().sum());
    let time = match (&xa, &xb) {
        (Some((_, Some(x))), Some((_, Some(y)))) => ratio(*x, *y),
        _ => String::new(),
    };
    let tuned = match (ua, ub) {
        (Some(x), Some(y)) => ratio(x, y),
        _ => String::new(),
    };
    let _ = writeln!(out, "{TOTAL_ROW},{},{},{}", ratio(total_a, total_b), time, tuned);
    Ok(out)
}
