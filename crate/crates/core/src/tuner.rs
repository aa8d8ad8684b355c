//! Annealer hyperparameter search: a Latin hypercube initial design followed
//! by random proposals around the incumbent.
//!
//! A configuration is scored by the total sample size summed over all
//! domains. Wall time per configuration is recorded alongside.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::EvalOptions;
use crate::annealer::SaConfig;
use crate::error::{Error, Result};
use crate::frame::DomainProblem;
use crate::runner::{run_domains, Start};

/// Half-width of a local proposal, as a fraction of the range span.
pub const LOCAL_STEP: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum TuneError {
    #[error("unknown annealer parameter `{0}`")]
    UnknownParameter(String),
    #[error("range `{name}`: {reason}")]
    BadRange { name: String, reason: String },
    #[error("tuning budget must be at least (1, 1)")]
    Budget,
}

/// Search range for one annealer setting. A present `increment` makes the
/// range discrete on the grid `lower + k·increment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increment: Option<f64>,
}

impl ParamRange {
    pub fn continuous(name: &str, lower: f64, upper: f64) -> Self {
        ParamRange {
            name: name.into(),
            lower,
            upper,
            increment: None,
        }
    }

    pub fn discrete(name: &str, lower: f64, upper: f64, increment: f64) -> Self {
        ParamRange {
            increment: Some(increment),
            ..Self::continuous(name, lower, upper)
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.increment.is_some()
    }

    /// Number of grid points of a discrete range.
    pub fn grid_len(&self) -> Option<usize> {
        self.increment
            .map(|inc| ((self.upper - self.lower) / inc + 1e-9).floor() as usize + 1)
    }

    pub fn grid_value(&self, k: usize) -> f64 {
        self.lower + k as f64 * self.increment.unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        let bad = |reason: &str| {
            Err(TuneError::BadRange {
                name: self.name.clone(),
                reason: reason.into(),
            })
        };
        param_slot(&self.name)?;
        if !(self.lower.is_finite() && self.upper.is_finite()) || self.lower > self.upper {
            return bad("need finite lower <= upper");
        }
        if let Some(inc) = self.increment {
            if !(inc > 0.0) {
                return bad("increment must be positive");
            }
            let steps = (self.upper - self.lower) / inc;
            if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                return bad("increment does not divide the span");
            }
        }
        Ok(())
    }

    fn clamp_to(&self, v: f64) -> f64 {
        let v = v.clamp(self.lower, self.upper);
        match self.increment {
            Some(inc) => {
                let k = ((v - self.lower) / inc).round() as usize;
                self.grid_value(k.min(self.grid_len().unwrap() - 1))
            }
            None => v,
        }
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Maxit,
    SeqLen,
    TMax,
    Decrement,
    LMaxPct,
    PNew,
}

fn param_slot(name: &str) -> Result<Slot, TuneError> {
    Ok(match name {
        "maxit" => Slot::Maxit,
        "seq_len" | "J" => Slot::SeqLen,
        "t_max" | "T" => Slot::TMax,
        "decrement" | "DC" => Slot::Decrement,
        "l_max_pct" => Slot::LMaxPct,
        "p_new" => Slot::PNew,
        other => return Err(TuneError::UnknownParameter(other.into())),
    })
}

/// Writes `value` into the named field of `config`.
pub fn set_param(config: &mut SaConfig, name: &str, value: f64) -> Result<(), TuneError> {
    match param_slot(name)? {
        Slot::Maxit => config.maxit = value.round() as usize,
        Slot::SeqLen => config.seq_len = value.round() as usize,
        Slot::TMax => config.t_max = value,
        Slot::Decrement => config.decrement = value,
        Slot::LMaxPct => config.l_max_pct = value,
        Slot::PNew => config.p_new = value,
    }
    Ok(())
}

pub fn get_param(config: &SaConfig, name: &str) -> Result<f64, TuneError> {
    Ok(match param_slot(name)? {
        Slot::Maxit => config.maxit as f64,
        Slot::SeqLen => config.seq_len as f64,
        Slot::TMax => config.t_max,
        Slot::Decrement => config.decrement,
        Slot::LMaxPct => config.l_max_pct,
        Slot::PNew => config.p_new,
    })
}

/// Ranges used for the Swiss municipalities frame.
pub fn swiss_ranges() -> Vec<ParamRange> {
    vec![
        ParamRange::discrete("maxit", 10.0, 50.0, 10.0),
        ParamRange::discrete("seq_len", 1000.0, 3000.0, 1000.0),
        ParamRange::continuous("t_max", 0.0, 0.001),
        ParamRange::continuous("decrement", 0.5, 1.0),
        ParamRange::continuous("l_max_pct", 0.0001, 0.025),
        ParamRange::continuous("p_new", 0.0, 0.1),
    ]
}

pub fn read_ranges(path: impl AsRef<Path>) -> Result<Vec<ParamRange>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ranges: Vec<ParamRange> = serde_json::from_str(&text)?;
    for r in &ranges {
        r.validate()?;
    }
    Ok(ranges)
}

/// `n` points, one row per point and one column per range. Each continuous
/// column puts exactly one point in each of `n` equal-width bins; discrete
/// columns map the binned position onto their grid.
pub fn lhs_design<R: Rng + ?Sized>(ranges: &[ParamRange], n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut design = vec![Vec::with_capacity(ranges.len()); n];
    for r in ranges {
        let mut bins: Vec<usize> = (0..n).collect();
        bins.shuffle(rng);
        for (row, &b) in design.iter_mut().zip(&bins) {
            let u = (b as f64 + rng.gen::<f64>()) / n as f64;
            let v = match r.grid_len() {
                Some(m) => r.grid_value(((u * m as f64) as usize).min(m - 1)),
                None => r.lower + u * (r.upper - r.lower),
            };
            row.push(v);
        }
    }
    design
}

/// A uniform proposal within `LOCAL_STEP` of the span around `point`;
/// discrete coordinates step at most one grid point.
pub fn local_proposal<R: Rng + ?Sized>(ranges: &[ParamRange], point: &[f64], rng: &mut R) -> Vec<f64> {
    ranges
        .iter()
        .zip(point)
        .map(|(r, &x)| match r.increment {
            Some(inc) => r.clamp_to(x + inc * rng.gen_range(-1i32..=1) as f64),
            None => r.clamp_to(x + (r.upper - r.lower) * LOCAL_STEP * (2.0 * rng.gen::<f64>() - 1.0)),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuneBudget {
    pub n_initial: usize,
    pub n_iterations: usize,
}

impl Default for TuneBudget {
    fn default() -> Self {
        TuneBudget {
            n_initial: 10,
            n_iterations: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Initial,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub index: usize,
    pub phase: Phase,
    pub config: SaConfig,
    /// Total sample size over domains; infinite if any domain failed.
    pub cost: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub best: SaConfig,
    pub best_cost: f64,
    pub trace: Vec<TuneRecord>,
}

impl TuneOutcome {
    pub fn total_seconds(&self) -> f64 {
        self.trace.iter().map(|r| r.seconds).sum()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut write = || -> std::io::Result<()> {
            writeln!(f, "index,phase,maxit,seq_len,t_max,decrement,l_max_pct,p_new,cost,seconds")?;
            for r in &self.trace {
                let c = &r.config;
                let phase = match r.phase {
                    Phase::Initial => "initial",
                    Phase::Local => "local",
                };
                writeln!(
                    f,
                    "{},{},{},{},{},{},{},{},{},{:.6}",
                    r.index, phase, c.maxit, c.seq_len, c.t_max, c.decrement, c.l_max_pct, c.p_new, r.cost, r.seconds
                )?;
            }
            f.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Settings shared by every configuration a tuning run evaluates.
#[derive(Debug, Clone)]
pub struct TuneSetup<'a> {
    pub problems: &'a [DomainProblem],
    pub start: Start,
    pub base: SaConfig,
    pub options: EvalOptions,
    pub workers: usize,
    /// Evaluate the initial design concurrently. Per-config timings then
    /// overlap and no longer measure sequential cost.
    pub parallel_initial: bool,
}

fn score(setup: &TuneSetup<'_>, config: &SaConfig) -> (f64, f64) {
    let t0 = Instant::now();
    let cost = match run_domains(setup.problems, &setup.start, config, &setup.options, setup.workers) {
        Ok(runs) => runs
            .iter()
            .map(|r| r.outcome.as_ref().map_or(f64::INFINITY, |o| o.cost))
            .sum(),
        Err(e) => {
            log::warn!("configuration rejected: {e}");
            f64::INFINITY
        }
    };
    (cost, t0.elapsed().as_secs_f64())
}

pub fn tune(setup: &TuneSetup<'_>, ranges: &[ParamRange], budget: TuneBudget, seed: u64) -> Result<TuneOutcome> {
    if budget.n_initial == 0 || budget.n_iterations == 0 {
        return Err(TuneError::Budget.into());
    }
    for r in ranges {
        r.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let to_config = |point: &[f64]| -> Result<SaConfig> {
        let mut c = setup.base.clone();
        for (r, &v) in ranges.iter().zip(point) {
            set_param(&mut c, &r.name, v)?;
        }
        Ok(c)
    };

    let design = lhs_design(ranges, budget.n_initial, &mut rng);
    let configs = design.iter().map(|p| to_config(p)).collect::<Result<Vec<_>>>()?;
    let scores: Vec<(f64, f64)> = if setup.parallel_initial {
        configs.par_iter().map(|c| score(setup, c)).collect()
    } else {
        configs.iter().map(|c| score(setup, c)).collect()
    };
    let mut trace: Vec<TuneRecord> = configs
        .into_iter()
        .zip(scores)
        .enumerate()
        .map(|(index, (config, (cost, seconds)))| TuneRecord {
            index,
            phase: Phase::Initial,
            config,
            cost,
            seconds,
        })
        .collect();
    let mut points = design;

    let argmin = |trace: &[TuneRecord]| {
        (0..trace.len())
            .reduce(|a, b| if trace[b].cost < trace[a].cost { b } else { a })
            .unwrap()
    };
    for _ in 0..budget.n_iterations {
        let inc = argmin(&trace);
        let point = local_proposal(ranges, &points[inc], &mut rng);
        let config = to_config(&point)?;
        let (cost, seconds) = score(setup, &config);
        log::info!("tuning step {}: cost {cost}", trace.len());
        trace.push(TuneRecord {
            index: trace.len(),
            phase: Phase::Local,
            config,
            cost,
            seconds,
        });
        points.push(point);
    }
    let b = argmin(&trace);
    Ok(TuneOutcome {
        best: trace[b].config.clone(),
        best_cost: trace[b].cost,
        trace,
    })
}
