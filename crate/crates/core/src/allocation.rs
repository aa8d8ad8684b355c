//! Cost of a stratification: stratum pooling, the ξ transform, and the
//! Bethel-Chromy allocation.
//!
//! With `N_h` units and variance `S²_{h,g}` in stratum `h`, the CV constraint
//! of target `g` is linear in `1/n_h` after dividing by
//! `D_g = T̂_g²ε_g² + Σ_h N_h S²_{h,g}`:
//!
//! ```text
//! Σ_h ξ_{h,g} / n_h ≤ 1,   ξ_{h,g} = N_h² S²_{h,g} / D_g
//! ```
//!
//! For fixed Lagrange weights `α` (on the simplex) the minimum-cost
//! allocation is `n_h = √a_h · Σ_k √a_k` with `a_h = Σ_g α_g ξ_{h,g}`. The
//! weights are found by the Chromy multiplicative fixed point
//! `α_g ← α_g c_g² / Σ_g' α_g' c_g'²` where `c_g = Σ_h ξ_{h,g}/n_h`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{AtomicStratum, DomainProblem};
use crate::partition::{check_labels, PartitionError};

/// Stopping threshold on `max_g |Δα_g|`.
pub const DEFAULT_EPSILON: f64 = 1.0e-11;
/// Iteration cap of the Chromy fixed point.
pub const DEFAULT_MAX_ITER: usize = 200;
/// Warm-start weights are floored here so a constraint that went slack can
/// become binding again.
pub const WARM_ALPHA_FLOOR: f64 = 1.0e-10;
/// Slack allowed on `Σ_h ξ_{h,g} / n_h ≤ 1` when accepting a fixed point.
pub const FEASIBILITY_TOL: f64 = 1.0e-9;

#[derive(Debug, Error)]
pub enum AllocationError {
    #[error(transparent)]
    Labels(#[from] PartitionError),
    #[error("{got} cost weights given for {strata} strata")]
    CostWeights { got: usize, strata: usize },
    #[error("{got} warm-start weights given for {targets} targets")]
    WarmStart { got: usize, targets: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceKind {
    /// Divide by `N_h`.
    #[default]
    Population,
    /// Divide by `N_h − 1` (zero for singleton strata).
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BethelParams {
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for BethelParams {
    fn default() -> Self {
        BethelParams {
            epsilon: DEFAULT_EPSILON,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Optional post-pass bounding each `n_h` to `[min(min_units, N_h), N_h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampPolicy {
    pub min_units: f64,
}

impl Default for ClampPolicy {
    fn default() -> Self {
        ClampPolicy { min_units: 2.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    #[serde(default)]
    pub variance: VarianceKind,
    #[serde(default)]
    pub bethel: BethelParams,
    #[serde(default)]
    pub clamp: Option<ClampPolicy>,
}

/// Running `(count, Σy, Σy²)` over a set of atomic strata.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sums: Vec<f64>,
    pub sumsq: Vec<f64>,
}

impl Moments {
    pub fn zero(targets: usize) -> Self {
        Moments {
            count: 0,
            sums: vec![0.0; targets],
            sumsq: vec![0.0; targets],
        }
    }

    pub fn add(&mut self, a: &AtomicStratum) {
        self.count += a.count;
        for g in 0..self.sums.len() {
            self.sums[g] += a.sums[g];
            self.sumsq[g] += a.sumsq[g];
        }
    }

    pub fn of<'a>(targets: usize, members: impl IntoIterator<Item = &'a AtomicStratum>) -> Self {
        let mut m = Moments::zero(targets);
        for a in members {
            m.add(a);
        }
        m
    }

    pub fn means(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sums.iter().map(|s| s / n).collect()
    }

    /// Pooled variances. `Σy²/N − ȳ²` can dip below zero through
    /// cancellation; such values are clamped to zero.
    pub fn variances(&self, kind: VarianceKind) -> Vec<f64> {
        let n = self.count as f64;
        self.sums
            .iter()
            .zip(&self.sumsq)
            .map(|(&s, &q)| {
                let mean = s / n;
                let pop = (q / n - mean * mean).max(0.0);
                match kind {
                    VarianceKind::Population => pop,
                    VarianceKind::Sample if self.count > 1 => pop * n / (n - 1.0),
                    VarianceKind::Sample => 0.0,
                }
            })
            .collect()
    }
}

/// Pooled statistics of one stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub count: u64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Zero-based atomic-stratum indices, ascending.
    pub members: Vec<usize>,
}

/// Pools atomic strata by 1-based contiguous labels.
pub fn pool_summaries(
    atomic: &[AtomicStratum],
    labels: &[usize],
    kind: VarianceKind,
) -> Result<Vec<StratumSummary>, AllocationError> {
    let h = check_labels(labels, atomic.len())?;
    let g = atomic.first().map_or(0, |a| a.sums.len());
    let mut moments = vec![Moments::zero(g); h];
    let mut members = vec![Vec::new(); h];
    for (l, (&lab, a)) in labels.iter().zip(atomic).enumerate() {
        moments[lab - 1].add(a);
        members[lab - 1].push(l);
    }
    Ok(moments
        .into_iter()
        .zip(members)
        .map(|(m, members)| StratumSummary {
            count: m.count,
            mean: m.means(),
            variance: m.variances(kind),
            members,
        })
        .collect())
}

/// Row-major `H × G` matrix of ξ values with their per-target denominators.
#[derive(Debug, Clone, PartialEq)]
pub struct XiMatrix {
    strata: usize,
    targets: usize,
    values: Vec<f64>,
    denominators: Vec<f64>,
}

impl XiMatrix {
    /// Builds ξ from `(N_h, S²_h)` pairs. A target whose denominator is zero
    /// (zero total and zero variance everywhere) gets a zero column.
    pub fn from_strata<'a, I>(strata: I, precision: &[f64], totals: &[f64]) -> Self
    where
        I: IntoIterator<Item = (u64, &'a [f64])>,
        I::IntoIter: Clone,
    {
        let g = precision.len();
        let it = strata.into_iter();
        let mut denominators: Vec<f64> = (0..g).map(|t| totals[t] * totals[t] * precision[t] * precision[t]).collect();
        let mut h = 0;
        for (n, s2) in it.clone() {
            for t in 0..g {
                denominators[t] += n as f64 * s2[t];
            }
            h += 1;
        }
        let mut values = Vec::with_capacity(h * g);
        for (n, s2) in it {
            let n = n as f64;
            for t in 0..g {
                let d = denominators[t];
                values.push(if d > 0.0 { n * n * s2[t] / d } else { 0.0 });
            }
        }
        XiMatrix {
            strata: h,
            targets: g,
            values,
            denominators,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let g = rows.first().map_or(0, Vec::len);
        XiMatrix {
            strata: rows.len(),
            targets: g,
            values: rows.iter().flatten().copied().collect(),
            denominators: vec![f64::NAN; g],
        }
    }

    pub fn strata(&self) -> usize {
        self.strata
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    pub fn get(&self, h: usize, g: usize) -> f64 {
        self.values[h * self.targets + g]
    }

    pub fn row(&self, h: usize) -> &[f64] {
        &self.values[h * self.targets..(h + 1) * self.targets]
    }

    pub fn denominators(&self) -> &[f64] {
        &self.denominators
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

pub fn compute_xi(summaries: &[StratumSummary], precision: &[f64], totals: &[f64]) -> XiMatrix {
    XiMatrix::from_strata(
        summaries.iter().map(|s| (s.count, s.variance.as_slice())),
        precision,
        totals,
    )
}

/// Continuous allocation with the weights that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub n: Vec<f64>,
    pub total: f64,
    pub alphas: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn closed_form(xi: &XiMatrix, alphas: &[f64], costs: Option<&[f64]>, n: &mut [f64]) -> f64 {
    let mut scale = 0.0;
    for (h, nh) in n.iter_mut().enumerate() {
        let a: f64 = xi.row(h).iter().zip(alphas).map(|(x, w)| x * w).sum();
        let c = costs.map_or(1.0, |c| c[h]);
        if a > 0.0 {
            *nh = a / c;
            scale += (a * c).sqrt();
        } else {
            *nh = 0.0;
        }
    }
    // r·(S/√r) rather than √r·S: exact when a single stratum carries all of S
    let mut total = 0.0;
    for nh in n.iter_mut() {
        if *nh > 0.0 {
            *nh *= scale / nh.sqrt();
        }
        total += *nh;
    }
    total
}

/// Normalized warm-start weights, or `None` when they are unusable.
fn sanitize_alphas(alpha0: &[f64]) -> Option<Vec<f64>> {
    if alpha0.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return None;
    }
    let floored: Vec<f64> = alpha0.iter().map(|a| a.max(WARM_ALPHA_FLOOR)).collect();
    let s: f64 = floored.iter().sum();
    Some(floored.iter().map(|a| a / s).collect())
}

/// Bethel-Chromy allocation for a ξ matrix.
///
/// `alpha0` warm-starts the weights; `None` starts from `1/G`. Strata whose
/// weighted ξ vanishes get `n_h = 0`. After `max_iter` iterations without
/// `max_g |Δα_g| < epsilon` the last iterate is returned with
/// `converged = false`. A fixed point that leaves some constraint violated
/// (a weight stuck near zero) also stops with `converged = false`.
pub fn bethel_allocate(xi: &XiMatrix, alpha0: Option<&[f64]>, params: &BethelParams) -> Allocation {
    bethel_allocate_with_costs(xi, alpha0, None, params)
}

/// As [`bethel_allocate`] but minimizing `Σ C_h n_h`.
pub fn bethel_allocate_with_costs(
    xi: &XiMatrix,
    alpha0: Option<&[f64]>,
    costs: Option<&[f64]>,
    params: &BethelParams,
) -> Allocation {
    let g = xi.targets();
    let h = xi.strata();
    let mut alphas = alpha0
        .filter(|a| a.len() == g)
        .and_then(sanitize_alphas)
        .unwrap_or_else(|| vec![1.0 / g as f64; g]);
    let mut n = vec![0.0; h];
    if xi.is_zero() {
        return Allocation {
            n,
            total: 0.0,
            alphas,
            iterations: 0,
            converged: true,
        };
    }

    let mut converged = false;
    let mut iterations = 0;
    let mut next = vec![0.0; g];
    let mut load = vec![0.0; g];
    while iterations < params.max_iter {
        iterations += 1;
        closed_form(xi, &alphas, costs, &mut n);
        let mut norm = 0.0;
        for t in 0..g {
            let mut c = 0.0;
            for (k, &nk) in n.iter().enumerate() {
                let x = xi.get(k, t);
                if x > 0.0 {
                    c += x / nk;
                }
            }
            load[t] = c;
            next[t] = if alphas[t] > 0.0 { alphas[t] * c * c } else { 0.0 };
            norm += next[t];
        }
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        let mut diff: f64 = 0.0;
        for t in 0..g {
            let a = next[t] / norm;
            diff = diff.max((a - alphas[t]).abs());
            alphas[t] = a;
        }
        if diff < params.epsilon {
            // a vanishing weight barely moves even when its constraint is
            // violated; that is a stall, not a solution
            converged = load.iter().all(|&c| c <= 1.0 + FEASIBILITY_TOL);
            break;
        }
    }
    let total = closed_form(xi, &alphas, costs, &mut n);
    let total = match costs {
        Some(c) => n.iter().zip(c).map(|(x, w)| x * w).sum(),
        None => total,
    };
    Allocation {
        n,
        total,
        alphas,
        iterations,
        converged,
    }
}

/// CV of each estimated total under `allocation`. A stratum with `n_h = 0`
/// and positive variance makes the CV infinite.
pub fn achieved_cv(n: &[f64], summaries: &[StratumSummary], totals: &[f64]) -> Vec<f64> {
    let g = totals.len();
    (0..g)
        .map(|t| {
            let mut var = 0.0;
            for (nh, s) in n.iter().zip(summaries) {
                let s2 = s.variance[t];
                if s2 == 0.0 {
                    continue;
                }
                if *nh <= 0.0 {
                    return f64::INFINITY;
                }
                let big_n = s.count as f64;
                var += big_n * big_n * (1.0 - nh / big_n) * s2 / nh;
            }
            let var = var.max(0.0);
            if var == 0.0 {
                0.0
            } else if totals[t] == 0.0 {
                f64::INFINITY
            } else {
                var.sqrt() / totals[t].abs()
            }
        })
        .collect()
}

/// Applies the clamp post-pass in place and returns the new total.
pub fn clamp_allocation(n: &mut [f64], counts: impl IntoIterator<Item = u64>, policy: &ClampPolicy) -> f64 {
    let mut total = 0.0;
    for (nh, big_n) in n.iter_mut().zip(counts) {
        let cap = big_n as f64;
        *nh = nh.max(policy.min_units.min(cap)).min(cap);
        total += *nh;
    }
    total
}

/// A fully evaluated stratification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cost: f64,
    pub allocation: Allocation,
    pub summaries: Vec<StratumSummary>,
}

impl Evaluation {
    pub fn cv(&self, problem: &DomainProblem) -> Vec<f64> {
        achieved_cv(&self.allocation.n, &self.summaries, &problem.totals)
    }
}

/// Evaluates 1-based contiguous `labels` from scratch.
pub fn evaluate(
    labels: &[usize],
    problem: &DomainProblem,
    options: &EvalOptions,
    warm: Option<&[f64]>,
) -> Result<Evaluation, AllocationError> {
    evaluate_with_costs(labels, problem, options, warm, None)
}

/// [`evaluate`] with per-stratum unit costs `C_h` (default 1).
pub fn evaluate_with_costs(
    labels: &[usize],
    problem: &DomainProblem,
    options: &EvalOptions,
    warm: Option<&[f64]>,
    costs: Option<&[f64]>,
) -> Result<Evaluation, AllocationError> {
    let summaries = pool_summaries(&problem.atomic_strata, labels, options.variance)?;
    if let Some(c) = costs {
        if c.len() != summaries.len() {
            return Err(AllocationError::CostWeights {
                got: c.len(),
                strata: summaries.len(),
            });
        }
    }
    if let Some(w) = warm {
        if w.len() != problem.targets() {
            return Err(AllocationError::WarmStart {
                got: w.len(),
                targets: problem.targets(),
            });
        }
    }
    let xi = compute_xi(&summaries, &problem.precision, &problem.totals);
    let mut allocation = bethel_allocate_with_costs(&xi, warm, costs, &options.bethel);
    if let Some(policy) = &options.clamp {
        clamp_allocation(&mut allocation.n, summaries.iter().map(|s| s.count), policy);
        allocation.total = match costs {
            Some(c) => allocation.n.iter().zip(c).map(|(x, w)| x * w).sum(),
            None => allocation.n.iter().sum(),
        };
    }
    Ok(Evaluation {
        cost: allocation.total,
        allocation,
        summaries,
    })
}
