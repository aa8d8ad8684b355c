use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use strata_cli::commands::{
    brute_force, build_strata, check_failures, evaluate_partition, find_domain, read_start, read_strata,
    run_optimize, seed_partitions, tune_command, write_json_file, OptimizeSettings,
};
use strata_cli::{report_compare, CliError, RunConfig};
use strata_core::runner::default_workers;
use strata_core::tuner::{read_ranges, swiss_ranges, TuneBudget};
use strata_core::{ClampPolicy, DomainProblem};

#[derive(Parser)]
#[command(name = "strata", version, about = "Joint stratification and sample allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Read atomic strata written by `build-strata` instead of the frame.
    #[arg(long)]
    strata: Option<PathBuf>,
    /// Root seed; overrides `annealer.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism minus one).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Decay q with floor instead of ceiling.
    #[arg(long)]
    strict_decay: bool,
    /// Bound every n_h to [min(2, N_h), N_h] after allocation.
    #[arg(long)]
    clamp_allocation: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build atomic strata per domain from the frame.
    BuildStrata(Common),
    /// Write k-means starting partitions.
    Seed(Common),
    /// Anneal every domain and write partitions, allocations, traces and reports.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Directory of starting partitions (as written by `seed`); k-means otherwise.
        #[arg(long)]
        start: Option<PathBuf>,
    },
    /// Allocate a given partition of one domain.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        domain: String,
        #[arg(long)]
        partition: PathBuf,
    },
    /// Exhaustive optimum of one small domain.
    BruteForce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        domain: String,
    },
    /// Search annealer settings.
    Tune {
        #[command(flatten)]
        common: Common,
        /// Parameter ranges (JSON list); built-in ranges otherwise.
        #[arg(long)]
        ranges: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        initial: usize,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
    },
    /// Ratio table of two `optimize` output directories (A / B).
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Output CSV; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Loaded {
    cfg: RunConfig,
    problems: Vec<DomainProblem>,
    workers: usize,
}

fn load(c: &Common) -> Result<Loaded, CliError> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.annealer.seed = s;
    }
    if c.strict_decay {
        cfg.annealer.strict_decay = true;
    }
    if c.clamp_allocation && cfg.allocation.clamp.is_none() {
        cfg.allocation.clamp = Some(ClampPolicy::default());
    }
    let problems = match &c.strata {
        Some(dir) => read_strata(dir)?,
        None => cfg.problems()?,
    };
    let workers = c.workers.unwrap_or_else(default_workers);
    Ok(Loaded { cfg, problems, workers })
}

fn output_path(out: &Path, name: &str) -> Result<PathBuf, CliError> {
    strata_cli::commands::ensure_dir(out)?;
    Ok(out.join(name))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildStrata(c) => {
            let l = load(&c)?;
            let index = build_strata(&l.problems, &c.out)?;
            for e in index {
                println!("{}: {} records, {} atomic strata", e.domain, e.records, e.atomic_strata);
            }
        }
        Command::Seed(c) => {
            let l = load(&c)?;
            let recs = seed_partitions(&l.problems, &l.cfg.seeding, &l.cfg.allocation, l.cfg.annealer.seed, &c.out)?;
            for r in recs {
                println!("{}: k = {}, sample size {:.4}", r.domain, r.k, r.sample_size);
            }
        }
        Command::Optimize { common, start } => {
            let l = load(&common)?;
            let mut settings = OptimizeSettings::from_config(&l.cfg, l.workers);
            if let Some(dir) = start {
                settings.start = read_start(&l.problems, &dir)?;
            }
            let report = run_optimize(&l.problems, &settings, &common.out)?;
            for d in &report.domains {
                println!("{}: sample size {:.4} ({} strata)", d.domain, d.sample_size, d.strata);
            }
            println!(
                "total sample size {:.4}; N_SAAsol {}; {:.3}s",
                report.total_sample_size, report.n_saa_sol, report.wall_seconds
            );
            check_failures(&report, &common.out)?;
        }
        Command::Evaluate {
            common,
            domain,
            partition,
        } => {
            let l = load(&common)?;
            let p = find_domain(&l.problems, &domain)?;
            let alloc = evaluate_partition(p, &partition, &l.cfg.allocation)?;
            let path = output_path(&common.out, &strata_cli::report::allocation_file(&domain))?;
            alloc.write(&path)?;
            println!("{domain}: sample size {:.6}", alloc.sample_size);
        }
        Command::BruteForce { common, domain } => {
            let l = load(&common)?;
            let p = find_domain(&l.problems, &domain)?;
            let r = brute_force(p, &l.cfg.allocation)?;
            let stem = strata_core::frame::domain_file_stem(&domain);
            write_json_file(&output_path(&common.out, &format!("{stem}_optimum.json"))?, &r)?;
            println!(
                "{domain}: optimum {:.6} over {} partitions ({} optimal)",
                r.sample_size,
                r.partitions_evaluated,
                r.optimal_partitions.len()
            );
        }
        Command::Tune {
            common,
            ranges,
            initial,
            iterations,
        } => {
            let l = load(&common)?;
            let ranges = match ranges {
                Some(p) => read_ranges(&p)?,
                None => swiss_ranges(),
            };
            let budget = TuneBudget {
                n_initial: initial,
                n_iterations: iterations,
            };
            let t = tune_command(&l.problems, &l.cfg, &ranges, budget, l.workers, &common.out)?;
            println!(
                "best total sample size {:.4} after {} configurations, {:.1}s",
                t.best_cost,
                t.trace.len(),
                t.total_seconds()
            );
        }
        Command::Compare { a, b, out } => {
            let table = report_compare(&a, &b)?;
            match out {
                Some(p) => strata_cli::report::write_text(&p, &table)?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
