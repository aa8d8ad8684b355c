//! Initial stratifications from k-means over atomic-stratum means.
//!
//! Each atomic stratum is a point whose coordinates are its target means,
//! standardized per target across atomic strata. Every `k` in the requested
//! range is clustered and scored by its allocation cost; the cheapest
//! partition wins, smaller `k` on ties.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{evaluate, AllocationError, EvalOptions, Evaluation};
use crate::frame::DomainProblem;
use crate::kmeans::{kmeans, KMeansError};
use crate::partition::canonical;

pub const DEFAULT_K_CAP: usize = 25;
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Debug, Error)]
pub enum SeedingError {
    #[error("invalid k range [{k_min}, {k_max}] for {atomic} atomic strata")]
    Range { k_min: usize, k_max: usize, atomic: usize },
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedingConfig {
    /// Defaults to 2 (1 when `L = 1`).
    pub k_min: Option<usize>,
    /// Defaults to `min(L, 25)`.
    pub k_max: Option<usize>,
    pub restarts: usize,
}

impl Default for SeedingConfig {
    fn default() -> Self {
        SeedingConfig {
            k_min: None,
            k_max: None,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

impl SeedingConfig {
    pub fn fixed(k: usize) -> Self {
        SeedingConfig {
            k_min: Some(k),
            k_max: Some(k),
            ..Self::default()
        }
    }

    pub fn range(&self, l: usize) -> (usize, usize) {
        let k_max = self.k_max.unwrap_or(l.min(DEFAULT_K_CAP));
        let k_min = self.k_min.unwrap_or(2.min(k_max).max(1));
        (k_min, k_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub labels: Vec<usize>,
    pub k: usize,
    pub evaluation: Evaluation,
    /// `(k, cost)` for every candidate, ascending `k`.
    pub candidates: Vec<(usize, f64)>,
}

/// Standardized target means, one row per atomic stratum. Targets with no
/// spread are dropped. Returns the row-major buffer and its dimension.
pub fn features(problem: &DomainProblem) -> (Vec<f64>, usize) {
    let l = problem.len();
    let mut columns = Vec::new();
    for g in 0..problem.targets() {
        let col: Vec<f64> = problem.atomic_strata.iter().map(|a| a.mean(g)).collect();
        let mean = col.iter().sum::<f64>() / l as f64;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / l as f64).sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            log::warn!(
                "domain `{}`: target {} has no spread across atomic strata; ignored for clustering",
                problem.domain,
                problem.target_names.get(g).cloned().unwrap_or_else(|| g.to_string())
            );
            continue;
        }
        columns.push(col.into_iter().map(|x| (x - mean) / sd).collect::<Vec<f64>>());
    }
    if columns.is_empty() {
        return (vec![0.0; l], 1);
    }
    let dim = columns.len();
    let mut buf = Vec::with_capacity(l * dim);
    for i in 0..l {
        buf.extend(columns.iter().map(|c| c[i]));
    }
    (buf, dim)
}

pub fn kmeans_solution(
    problem: &DomainProblem,
    config: &SeedingConfig,
    seed: u64,
    options: &EvalOptions,
) -> Result<SeedOutcome, SeedingError> {
    let l = problem.len();
    let (k_min, k_max) = config.range(l);
    if k_min == 0 || k_min > k_max || k_max > l {
        return Err(SeedingError::Range { k_min, k_max, atomic: l });
    }
    let (points, dim) = features(problem);
    let scored: Vec<(usize, Vec<usize>, Evaluation)> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let fit = kmeans(&points, dim, None, k, config.restarts, &mut rng)?;
            let labels = canonical(&fit.assignments);
            let eval = evaluate(&labels, problem, options, None)?;
            Ok((k, labels, eval))
        })
        .collect::<Result<_, SeedingError>>()?;
    let candidates = scored.iter().map(|(k, _, e)| (*k, e.cost)).collect();
    let (k, labels, evaluation) = scored
        .into_iter()
        .reduce(|a, b| if b.2.cost < a.2.cost { b } else { a })
        .expect("non-empty k range");
    Ok(SeedOutcome {
        labels,
        k,
        evaluation,
        candidates,
    })
}
