//! Simulated annealing over stratifications.
//!
//! The outer loop runs `maxit` sequences while the temperature stays above
//! `t_min`; each sequence holds the temperature fixed for `seq_len` steps and
//! then multiplies it by `decrement`. At the start of a sequence, with
//! probability `1/seq_len`, every atomic stratum is independently sent to one
//! new stratum with probability `p_new`. Each step moves `q` atomic strata
//! between two random strata, delta-evaluates the neighbour and accepts it
//! under the Metropolis rule. The best solution found so far is returned.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{evaluate, EvalOptions, Evaluation};
use crate::error::{Error, Result};
use crate::frame::DomainProblem;
use crate::partition::canonical;
use crate::state::StrataState;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("annealer setting `{field}` = {value} is out of range ({expected})")]
    OutOfRange {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaConfig {
    /// Number of sequences.
    pub maxit: usize,
    /// Steps per sequence, `J`.
    pub seq_len: usize,
    pub t_max: f64,
    pub t_min: f64,
    /// Geometric cooling factor applied after each sequence.
    pub decrement: f64,
    /// Fraction of `L` moved per step at the start of the first sequence.
    pub l_max_pct: f64,
    /// Per-atomic-stratum probability of joining an injected new stratum.
    pub p_new: f64,
    pub seed: u64,
    /// Decay `q` with `floor` instead of `ceiling` so it reaches 1.
    pub strict_decay: bool,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            maxit: 10,
            seq_len: 3000,
            t_max: 7.2e-5,
            t_min: 1.0e-11,
            decrement: 0.5083686,
            l_max_pct: 0.0183356,
            p_new: 0.0997907,
            seed: 0,
            strict_decay: false,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, field, value: f64, expected| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange { field, value, expected })
            }
        };
        check(self.maxit >= 1, "maxit", self.maxit as f64, ">= 1")?;
        check(self.seq_len >= 1, "seq_len", self.seq_len as f64, ">= 1")?;
        check(self.t_min > 0.0 && self.t_min.is_finite(), "t_min", self.t_min, "> 0")?;
        check(self.t_max >= self.t_min && self.t_max.is_finite(), "t_max", self.t_max, ">= t_min")?;
        check(self.decrement > 0.0 && self.decrement <= 1.0, "decrement", self.decrement, "(0, 1]")?;
        check((0.0..=1.0).contains(&self.l_max_pct), "l_max_pct", self.l_max_pct, "[0, 1]")?;
        check((0.0..=1.0).contains(&self.p_new), "p_new", self.p_new, "[0, 1]")?;
        Ok(())
    }

    /// Upper bound on solutions evaluated for one domain.
    pub fn solutions_per_domain(&self) -> u64 {
        self.maxit as u64 * self.seq_len as u64
    }
}

/// `q` for the first step: `round(L · pct)`, at least 1.
pub fn initial_q(l: usize, l_max_pct: f64) -> usize {
    ((l as f64 * l_max_pct).round() as usize).max(1)
}

/// `q` for the next step of the first sequence: `ceiling(0.99 q)`, or
/// `floor(0.99 q)` in strict mode, never below 1.
pub fn decay_q(q: usize, strict: bool) -> usize {
    let scaled = q * 99;
    let next = if strict { scaled / 100 } else { scaled.div_ceil(100) };
    next.max(1)
}

/// `q` at 1-based sequence `i`, step `j`, given the previous step's `q`.
pub fn q_for_step(i: usize, j: usize, prev: usize, l: usize, l_max_pct: f64, strict: bool) -> usize {
    match (i, j) {
        (1, 1) => initial_q(l, l_max_pct),
        (1, _) => decay_q(prev, strict),
        _ => 1,
    }
}

/// Metropolis rule. Draws from `rng` only when `delta > 0`.
pub fn accept<R: Rng + ?Sized>(delta: f64, t: f64, rng: &mut R) -> bool {
    if delta <= 0.0 {
        return true;
    }
    rng.gen::<f64>() < (-delta / t).exp()
}

/// Statistics of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub sequence: usize,
    pub temperature: f64,
    pub best_cost: f64,
    pub accepted_improving: u64,
    pub accepted_metropolis: u64,
    pub rejected: u64,
    /// Steps where no move was possible (a single stratum).
    pub skipped: u64,
    pub evaluated: u64,
    pub strata: usize,
    pub current_cost: f64,
    /// Atomic strata moved by new-stratum injection at the sequence start.
    pub injected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnealTrace {
    pub sequences: Vec<SequenceRecord>,
    pub evaluated: u64,
    pub initial_cost: f64,
    pub best_cost: f64,
}

impl AnnealTrace {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(f).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "sequence,temperature,best_cost,accepted_improving,accepted_metropolis,rejected,skipped,evaluated,strata,current_cost,injected"
        )?;
        for r in &self.sequences {
            writeln!(
                w,
                "{},{:e},{},{},{},{},{},{},{},{},{}",
                r.sequence,
                r.temperature,
                r.best_cost,
                r.accepted_improving,
                r.accepted_metropolis,
                r.rejected,
                r.skipped,
                r.evaluated,
                r.strata,
                r.current_cost,
                r.injected
            )?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealOutcome {
    /// Best partition found, in first-appearance label order.
    pub labels: Vec<usize>,
    /// Cost of `labels` re-evaluated from scratch.
    pub cost: f64,
    pub evaluation: Evaluation,
    pub trace: AnnealTrace,
}

/// Runs the annealer from `initial` (1-based contiguous labels).
pub fn anneal(
    problem: &DomainProblem,
    initial: &[usize],
    config: &SaConfig,
    options: &EvalOptions,
) -> Result<AnnealOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = StrataState::new(problem, initial, options.clone())?;
    let l = problem.len();

    let mut best_labels = state.labels();
    let mut best_cost = state.cost();
    // true while `best_labels` is known to equal the current labels
    let mut best_is_current = true;
    let mut trace = AnnealTrace {
        initial_cost: best_cost,
        ..AnnealTrace::default()
    };

    let mut t = config.t_max;
    let mut i = 0;
    let mut q = 1;
    while i < config.maxit && t > config.t_min {
        i += 1;
        let mut rec = SequenceRecord {
            sequence: i,
            temperature: t,
            best_cost,
            accepted_improving: 0,
            accepted_metropolis: 0,
            rejected: 0,
            skipped: 0,
            evaluated: 0,
            strata: 0,
            current_cost: 0.0,
            injected: 0,
        };

        if rng.gen::<f64>() < 1.0 / config.seq_len as f64 {
            if best_is_current {
                best_labels = state.labels();
            }
            if let Some(undo) = state.inject_new_stratum(config.p_new, &mut rng)? {
                rec.injected = undo.moved_count();
                best_is_current = false;
            }
        }

        for j in 1..=config.seq_len {
            q = q_for_step(i, j, q, l, config.l_max_pct, config.strict_decay);
            rec.evaluated += 1;
            let Some(mv) = state.perturb(q, &mut rng) else {
                rec.skipped += 1;
                log::trace!("sequence {i} step {j}: single stratum, nothing to move");
                if state.cost() <= best_cost {
                    best_cost = state.cost();
                    best_is_current = true;
                }
                continue;
            };
            let current = state.cost();
            let undo = state.apply_move(&mv)?;
            let delta = state.cost() - current;
            if accept(delta, t, &mut rng) {
                if delta <= 0.0 {
                    rec.accepted_improving += 1;
                } else {
                    rec.accepted_metropolis += 1;
                }
                if best_is_current {
                    best_labels = state.labels_before(&undo);
                    best_is_current = false;
                }
            } else {
                rec.rejected += 1;
                state.revert_move(undo)?;
            }
            if state.cost() <= best_cost {
                best_cost = state.cost();
                best_is_current = true;
            }
        }

        rec.best_cost = best_cost;
        rec.strata = state.strata_count();
        rec.current_cost = state.cost();
        trace.evaluated += rec.evaluated;
        trace.sequences.push(rec);
        t *= config.decrement;
    }

    if best_is_current {
        best_labels = state.labels();
    }
    trace.best_cost = best_cost;
    let labels = canonical(&best_labels);
    let evaluation = evaluate(&labels, problem, options, None)?;
    Ok(AnnealOutcome {
        labels,
        cost: evaluation.cost,
        evaluation,
        trace,
    })
}
