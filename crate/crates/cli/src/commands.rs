use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use strata_core::allocation::evaluate;
use strata_core::frame::{domain_file_stem, read_problem_json, write_problem_json};
use strata_core::oracle::{brute_force_optimum, BruteForceResult};
use strata_core::partition::{read_partition_csv, write_partition_csv};
use strata_core::runner::{domain_seed, run_domains, Start};
use strata_core::seeding::{kmeans_solution, SeedingConfig};
use strata_core::tuner::{tune, ParamRange, TuneBudget, TuneOutcome, TuneSetup};
use strata_core::{DomainProblem, EvalOptions, SaConfig};

use crate::report::{
    allocation_file, partition_file, trace_file, write_text, AllocationReport, DomainReport, Failure,
    OptimizeReport, FAILURES_FILE, REPORT_FILE, SUMMARY_FILE, TIMING_FILE, TUNING_FILE,
};
use crate::CliError;

pub const DOMAIN_INDEX_FILE: &str = "domains.json";

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| out_err(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| out_err(path, e))?;
    write_text(path, &(text + "\n"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainIndexEntry {
    pub domain: String,
    pub file: String,
    pub atomic_strata: usize,
    pub records: u64,
}

/// Writes one atomic-strata JSON per domain plus an index.
pub fn build_strata(problems: &[DomainProblem], out: &Path) -> Result<Vec<DomainIndexEntry>, CliError> {
    ensure_dir(out)?;
    let mut index = Vec::with_capacity(problems.len());
    for p in problems {
        let file = format!("{}.json", domain_file_stem(&p.domain));
        let path = out.join(&file);
        write_problem_json(&path, p).map_err(|e| out_err(&path, e))?;
        index.push(DomainIndexEntry {
            domain: p.domain.clone(),
            file,
            atomic_strata: p.len(),
            records: p.record_count(),
        });
    }
    write_json(&out.join(DOMAIN_INDEX_FILE), &index)?;
    Ok(index)
}

/// Reads problems written by [`build_strata`].
pub fn read_strata(dir: &Path) -> Result<Vec<DomainProblem>, CliError> {
    let path = dir.join(DOMAIN_INDEX_FILE);
    let text = crate::report::read_text(&path)?;
    let index: Vec<DomainIndexEntry> =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    index
        .iter()
        .map(|e| read_problem_json(dir.join(&e.file)).map_err(|err| CliError::Input(err.to_string())))
        .collect()
}

pub fn find_domain<'a>(problems: &'a [DomainProblem], name: &str) -> Result<&'a DomainProblem, CliError> {
    problems.iter().find(|p| p.domain == name).ok_or_else(|| {
        let names: Vec<&str> = problems.iter().map(|p| p.domain.as_str()).collect();
        CliError::Input(format!("unknown domain `{name}`; available: {names:?}"))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub domain: String,
    pub seed: u64,
    pub k: usize,
    pub sample_size: f64,
    pub candidates: Vec<(usize, f64)>,
}

/// k-means starting partitions for every domain, written as partition CSVs.
pub fn seed_partitions(
    problems: &[DomainProblem],
    seeding: &SeedingConfig,
    options: &EvalOptions,
    root_seed: u64,
    out: &Path,
) -> Result<Vec<SeedRecord>, CliError> {
    ensure_dir(out)?;
    let mut records = Vec::with_capacity(problems.len());
    for (i, p) in problems.iter().enumerate() {
        let seed = domain_seed(root_seed, i);
        let s = kmeans_solution(p, seeding, seed, options)
            .map_err(|e| CliError::Input(format!("domain `{}`: {e}", p.domain)))?;
        let path = out.join(partition_file(&p.domain));
        write_partition_csv(&path, p, &s.labels).map_err(|e| out_err(&path, e))?;
        records.push(SeedRecord {
            domain: p.domain.clone(),
            seed,
            k: s.k,
            sample_size: s.evaluation.cost,
            candidates: s.candidates,
        });
    }
    write_json(&out.join("seeding.json"), &records)?;
    Ok(records)
}

/// Starting partitions read from `dir`, one partition CSV per domain.
pub fn read_start(problems: &[DomainProblem], dir: &Path) -> Result<Start, CliError> {
    problems
        .iter()
        .map(|p| {
            let path = dir.join(partition_file(&p.domain));
            read_partition_csv(&path, p).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Start::Given)
}

#[derive(Debug, Clone)]
pub struct OptimizeSettings {
    pub annealer: SaConfig,
    pub allocation: EvalOptions,
    pub start: Start,
    pub workers: usize,
}

impl OptimizeSettings {
    pub fn from_config(cfg: &crate::RunConfig, workers: usize) -> Self {
        OptimizeSettings {
            annealer: cfg.annealer.clone(),
            allocation: cfg.allocation.clone(),
            start: Start::KMeans(cfg.seeding.clone()),
            workers,
        }
    }
}

/// Optimizes all domains and writes per-domain outputs, `report.csv`,
/// `timing.csv` and `summary.json` under `out`. Failed domains are listed in
/// `failures.json` and in the returned report; the others are still written.
pub fn run_optimize(
    problems: &[DomainProblem],
    settings: &OptimizeSettings,
    out: &Path,
) -> Result<OptimizeReport, CliError> {
    ensure_dir(out)?;
    let t0 = Instant::now();
    let runs = run_domains(problems, &settings.start, &settings.annealer, &settings.allocation, settings.workers)?;
    let wall_seconds = t0.elapsed().as_secs_f64();

    let mut domains = Vec::new();
    let mut failures = Vec::new();
    for (run, problem) in runs.into_iter().zip(problems) {
        let outcome = match run.outcome {
            Ok(o) => o,
            Err(e) => {
                failures.push(Failure {
                    domain: run.domain,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let part = out.join(partition_file(&problem.domain));
        write_partition_csv(&part, problem, &outcome.labels).map_err(|e| out_err(&part, e))?;
        let alloc = AllocationReport::new(problem, &outcome.evaluation);
        alloc.write(&out.join(allocation_file(&problem.domain)))?;
        outcome
            .trace
            .write_csv(out.join(trace_file(&problem.domain)))
            .map_err(|e| CliError::Output(e.to_string()))?;
        domains.push(DomainReport {
            index: run.index,
            domain: run.domain,
            seed: run.seed,
            atomic_strata: problem.len(),
            strata: outcome.evaluation.summaries.len(),
            sample_size: outcome.cost,
            initial_sample_size: outcome.trace.initial_cost,
            solutions_evaluated: outcome.trace.evaluated,
            converged: outcome.evaluation.allocation.converged,
            precision: problem.precision.clone(),
            cv: alloc.cv,
            seconds: run.seconds,
            labels: outcome.labels,
        });
    }

    let cfg = &settings.annealer;
    let report = OptimizeReport {
        root_seed: cfg.seed,
        maxit: cfg.maxit,
        seq_len: cfg.seq_len,
        n_saa_sol: problems.len() as u64 * cfg.solutions_per_domain(),
        total_sample_size: domains.iter().map(|d| d.sample_size).sum(),
        solutions_evaluated: domains.iter().map(|d| d.solutions_evaluated).sum(),
        domains,
        failures,
        wall_seconds,
    };
    write_text(&out.join(REPORT_FILE), &report.report_csv())?;
    write_text(&out.join(TIMING_FILE), &report.timing_csv())?;
    write_json(&out.join(SUMMARY_FILE), &report)?;
    if !report.failures.is_empty() {
        write_json(&out.join(FAILURES_FILE), &report.failures)?;
    }
    Ok(report)
}

/// Turns a report with failed domains into the matching error.
pub fn check_failures(report: &OptimizeReport, out: &Path) -> Result<(), CliError> {
    if report.failures.is_empty() {
        return Ok(());
    }
    Err(CliError::DomainFailure {
        failed: report.failures.len(),
        total: report.failures.len() + report.domains.len(),
        manifest: out.join(FAILURES_FILE).display().to_string(),
    })
}

pub fn evaluate_partition(
    problem: &DomainProblem,
    partition: &Path,
    options: &EvalOptions,
) -> Result<AllocationReport, CliError> {
    let labels = read_partition_csv(partition, problem)
        .map_err(|e| CliError::Input(format!("{}: {e}", partition.display())))?;
    let eval = evaluate(&labels, problem, options, None).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(AllocationReport::new(problem, &eval))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceReport {
    pub domain: String,
    pub sample_size: f64,
    pub partitions_evaluated: u64,
    pub optimal_partitions: Vec<Vec<usize>>,
}

pub fn brute_force(problem: &DomainProblem, options: &EvalOptions) -> Result<BruteForceReport, CliError> {
    let BruteForceResult {
        cost,
        argmins,
        evaluated,
    } = brute_force_optimum(problem, options).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(BruteForceReport {
        domain: problem.domain.clone(),
        sample_size: cost,
        partitions_evaluated: evaluated,
        optimal_partitions: argmins,
    })
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_json(path, value)
}

/// Tunes the annealer over all domains, starting every configuration from the
/// same k-means partitions. Writes `tuning.csv` and `best_config.json`.
pub fn tune_command(
    problems: &[DomainProblem],
    cfg: &crate::RunConfig,
    ranges: &[ParamRange],
    budget: TuneBudget,
    workers: usize,
    out: &Path,
) -> Result<TuneOutcome, CliError> {
    ensure_dir(out)?;
    let starts = problems
        .iter()
        .enumerate()
        .map(|(i, p)| {
            kmeans_solution(p, &cfg.seeding, domain_seed(cfg.annealer.seed, i), &cfg.allocation)
                .map(|s| s.labels)
                .map_err(|e| CliError::Input(format!("domain `{}`: {e}", p.domain)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let setup = TuneSetup {
        problems,
        start: Start::Given(starts),
        base: cfg.annealer.clone(),
        options: cfg.allocation.clone(),
        workers,
        parallel_initial: false,
    };
    let outcome = tune(&setup, ranges, budget, cfg.annealer.seed)?;
    let path: PathBuf = out.join(TUNING_FILE);
    outcome.write_csv(&path).map_err(|e| out_err(&path, e))?;
    write_json(&out.join("best_config.json"), &outcome.best)?;
    Ok(outcome)
}
