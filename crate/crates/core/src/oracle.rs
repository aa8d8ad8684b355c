//! Exhaustive search over set partitions of small problems.

use rayon::prelude::*;
use thiserror::Error;

use crate::allocation::{evaluate, AllocationError, EvalOptions};
use crate::frame::DomainProblem;

/// Largest `L` accepted; Bell(12) = 4,213,597 partitions.
pub const MAX_ATOMIC: usize = 12;

/// Costs within this relative distance of the minimum count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

const CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("refusing to enumerate partitions of {0} atomic strata (limit {MAX_ATOMIC})")]
    TooLarge(usize),
    #[error("nothing to enumerate")]
    Empty,
    #[error(transparent)]
    Allocation(#[from] AllocationError),
}

/// Restricted growth strings of length `l`, 1-based, in lexicographic order.
#[derive(Debug, Clone)]
pub struct SetPartitions {
    current: Vec<usize>,
    /// `prefix_max[i]` = max of `current[..=i]`.
    prefix_max: Vec<usize>,
    done: bool,
}

impl SetPartitions {
    pub fn new(l: usize) -> Result<Self, OracleError> {
        if l > MAX_ATOMIC {
            return Err(OracleError::TooLarge(l));
        }
        if l == 0 {
            return Err(OracleError::Empty);
        }
        Ok(SetPartitions {
            current: vec![1; l],
            prefix_max: vec![1; l],
            done: false,
        })
    }

    fn advance(&mut self) {
        let l = self.current.len();
        for i in (1..l).rev() {
            if self.current[i] <= self.prefix_max[i - 1] {
                self.current[i] += 1;
                self.prefix_max[i] = self.prefix_max[i - 1].max(self.current[i]);
                for k in i + 1..l {
                    self.current[k] = 1;
                    self.prefix_max[k] = self.prefix_max[i];
                }
                return;
            }
        }
        self.done = true;
    }
}

impl Iterator for SetPartitions {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        self.advance();
        Some(out)
    }
}

pub fn enumerate_partitions(l: usize) -> Result<SetPartitions, OracleError> {
    SetPartitions::new(l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub cost: f64,
    /// Every partition whose cost ties the minimum, in enumeration order.
    pub argmins: Vec<Vec<usize>>,
    pub evaluated: u64,
}

/// Evaluates every partition and returns the exact minimum cost.
pub fn brute_force_optimum(problem: &DomainProblem, options: &EvalOptions) -> Result<BruteForceResult, OracleError> {
    let parts = enumerate_partitions(problem.len())?;
    let mut costs: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut batch = Vec::with_capacity(CHUNK);
    let flush = |batch: &mut Vec<Vec<usize>>, costs: &mut Vec<(Vec<usize>, f64)>| -> Result<(), OracleError> {
        let scored: Result<Vec<_>, AllocationError> = batch
            .par_drain(..)
            .map(|labels| evaluate(&labels, problem, options, None).map(|e| (labels, e.cost)))
            .collect();
        costs.extend(scored?);
        Ok(())
    };
    let mut best = f64::INFINITY;
    for p in parts {
        batch.push(p);
        if batch.len() == CHUNK {
            flush(&mut batch, &mut costs)?;
            best = costs.iter().fold(best, |m, (_, c)| m.min(*c));
            costs.retain(|(_, c)| is_tie(*c, best));
        }
    }
    flush(&mut batch, &mut costs)?;
    best = costs.iter().fold(best, |m, (_, c)| m.min(*c));
    let argmins = costs.into_iter().filter(|(_, c)| is_tie(*c, best)).map(|(l, _)| l).collect();
    Ok(BruteForceResult {
        cost: best,
        argmins,
        evaluated: bell(problem.len()),
    })
}

fn is_tie(c: f64, best: f64) -> bool {
    c - best <= TIE_TOLERANCE * best.abs().max(f64::MIN_POSITIVE)
}

/// Bell number by the Bell triangle.
pub fn bell(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for &x in &row {
            let last = *next.last().unwrap();
            next.push(last + x);
        }
        row = next;
    }
    row[0]
}
