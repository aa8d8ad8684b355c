//! Mutable stratification with in-place moves and delta evaluation.
//!
//! Moving atomic strata between two strata leaves every other stratum's
//! statistics untouched, so [`StrataState`] caches per-stratum moments and
//! only recomputes the source and destination after a move. The Bethel-Chromy
//! weights of the current solution warm-start the next allocation.
//!
//! A move is applied in place and returns an [`Undo`] record; reverting it
//! restores labels, member lists, cached statistics and allocation exactly.
//! Emptied strata are deleted and higher strata renumbered down by one, so
//! labels always cover `1..=H` without gaps.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::allocation::{
    bethel_allocate, clamp_allocation, evaluate, AllocationError, EvalOptions, Evaluation, Moments,
    StratumSummary, XiMatrix,
};
use crate::frame::DomainProblem;
use crate::partition::{check_labels, PartitionError};

#[derive(Debug, Error)]
pub enum StateError {
    #[error(transparent)]
    Labels(#[from] PartitionError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error("invalid move: {0}")]
    InvalidMove(String),
    #[error("undo record does not match the current state")]
    StaleUndo,
}

/// Where moved atomic strata go.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    /// An existing stratum, 1-based.
    Existing(usize),
    /// A fresh stratum labelled `H + 1`.
    New,
}

/// Relocation of `ids` (zero-based atomic strata) from stratum `source`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Move {
    pub source: usize,
    pub destination: Destination,
    pub ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Stratum {
    members: Vec<usize>,
    moments: Moments,
    variance: Vec<f64>,
}

/// Everything needed to put the state back as it was before a move.
#[derive(Debug)]
pub struct Undo {
    epoch: u64,
    prev_epoch: u64,
    moved: Vec<(usize, usize)>,
    touched: Vec<(usize, Stratum)>,
    emptied: Vec<usize>,
    created: bool,
    full_labels: Option<Vec<usize>>,
    alphas: Vec<f64>,
    n: Vec<f64>,
    cost: f64,
    converged: bool,
    iterations: usize,
}

impl Undo {
    /// Whether any source stratum lost its last member.
    pub fn source_emptied(&self) -> bool {
        !self.emptied.is_empty()
    }

    pub fn emptied_count(&self) -> usize {
        self.emptied.len()
    }

    pub fn created_stratum(&self) -> bool {
        self.created
    }

    pub fn moved_count(&self) -> usize {
        self.moved.len()
    }

    /// Cost before the move was applied.
    pub fn previous_cost(&self) -> f64 {
        self.cost
    }
}

/// Deep copy of the observable state, for equality checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub labels: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub summaries: Vec<(u64, Vec<f64>, Vec<f64>, Vec<f64>)>,
    pub alphas: Vec<f64>,
    pub n: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
}

pub struct StrataState<'p> {
    problem: &'p DomainProblem,
    options: EvalOptions,
    /// Zero-based stratum index per atomic stratum.
    labels: Vec<usize>,
    strata: Vec<Stratum>,
    alphas: Vec<f64>,
    n: Vec<f64>,
    cost: f64,
    converged: bool,
    iterations: usize,
    cold_start: bool,
    epoch: u64,
    epoch_counter: u64,
    recomputes: u64,
}

impl<'p> StrataState<'p> {
    /// Builds the state from 1-based contiguous labels and evaluates it with
    /// default starting weights.
    pub fn new(problem: &'p DomainProblem, labels: &[usize], options: EvalOptions) -> Result<Self, StateError> {
        let h = check_labels(labels, problem.len())?;
        let mut members = vec![Vec::new(); h];
        for (l, &lab) in labels.iter().enumerate() {
            members[lab - 1].push(l);
        }
        let g = problem.targets();
        let mut state = StrataState {
            problem,
            labels: labels.iter().map(|l| l - 1).collect(),
            strata: Vec::with_capacity(h),
            alphas: vec![1.0 / g as f64; g],
            n: Vec::new(),
            cost: 0.0,
            converged: true,
            iterations: 0,
            cold_start: false,
            epoch: 0,
            epoch_counter: 0,
            recomputes: 0,
            options,
        };
        for m in members {
            let s = state.build_stratum(m);
            state.strata.push(s);
        }
        state.reallocate(true);
        Ok(state)
    }

    pub fn problem(&self) -> &'p DomainProblem {
        self.problem
    }

    pub fn options(&self) -> &EvalOptions {
        &self.options
    }

    /// Forces every allocation to start from the default weights.
    pub fn set_cold_start(&mut self, cold: bool) {
        self.cold_start = cold;
    }

    /// 1-based labels.
    pub fn labels(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn label_of(&self, atomic: usize) -> usize {
        self.labels[atomic] + 1
    }

    /// Number of strata, `H`.
    pub fn strata_count(&self) -> usize {
        self.strata.len()
    }

    /// Members of 1-based stratum `h`, ascending.
    pub fn members(&self, h: usize) -> &[usize] {
        &self.strata[h - 1].members
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn allocation(&self) -> &[f64] {
        &self.n
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// How many stratum statistics have been recomputed so far.
    pub fn recompute_count(&self) -> u64 {
        self.recomputes
    }

    pub fn summaries(&self) -> Vec<StratumSummary> {
        self.strata
            .iter()
            .map(|s| StratumSummary {
                count: s.moments.count,
                mean: s.moments.means(),
                variance: s.variance.clone(),
                members: s.members.clone(),
            })
            .collect()
    }

    /// 1-based labels as they were before `undo`'s move was applied.
    pub fn labels_before(&self, undo: &Undo) -> Vec<usize> {
        match &undo.full_labels {
            Some(l) => l.iter().map(|x| x + 1).collect(),
            None => {
                let mut l = self.labels();
                for &(id, old) in &undo.moved {
                    l[id] = old + 1;
                }
                l
            }
        }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            labels: self.labels(),
            members: self.strata.iter().map(|s| s.members.clone()).collect(),
            summaries: self
                .strata
                .iter()
                .map(|s| (s.moments.count, s.moments.sums.clone(), s.moments.sumsq.clone(), s.variance.clone()))
                .collect(),
            alphas: self.alphas.clone(),
            n: self.n.clone(),
            cost: self.cost,
            converged: self.converged,
        }
    }

    /// Evaluates the current labels from scratch with default weights.
    pub fn full_evaluation(&self) -> Result<Evaluation, AllocationError> {
        evaluate(&self.labels(), self.problem, &self.options, None)
    }

    fn build_stratum(&mut self, members: Vec<usize>) -> Stratum {
        self.recomputes += 1;
        let moments = Moments::of(
            self.problem.targets(),
            members.iter().map(|&m| &self.problem.atomic_strata[m]),
        );
        let variance = moments.variances(self.options.variance);
        Stratum {
            members,
            moments,
            variance,
        }
    }

    fn refresh(&mut self, idx: usize) {
        let members = std::mem::take(&mut self.strata[idx].members);
        self.strata[idx] = self.build_stratum(members);
    }

    fn reallocate(&mut self, cold: bool) {
        let xi = XiMatrix::from_strata(
            self.strata.iter().map(|s| (s.moments.count, s.variance.as_slice())),
            &self.problem.precision,
            &self.problem.totals,
        );
        let warm = (!cold && !self.cold_start).then_some(self.alphas.as_slice());
        let mut alloc = bethel_allocate(&xi, warm, &self.options.bethel);
        // a warm start that stalled early with a violated constraint is
        // retried cold; one that ran out of iterations is further along
        // than a cold start would get
        if !alloc.converged && warm.is_some() && alloc.iterations < self.options.bethel.max_iter {
            alloc = bethel_allocate(&xi, None, &self.options.bethel);
        }
        if let Some(policy) = &self.options.clamp {
            alloc.total = clamp_allocation(&mut alloc.n, self.strata.iter().map(|s| s.moments.count), policy);
        }
        self.cost = alloc.total;
        self.n = alloc.n;
        self.alphas = alloc.alphas;
        self.converged = alloc.converged;
        self.iterations = alloc.iterations;
    }

    /// Draws a random move of `q` atomic strata (clamped to the source size)
    /// between two distinct strata chosen uniformly. `None` when `H < 2`.
    pub fn perturb<R: Rng + ?Sized>(&self, q: usize, rng: &mut R) -> Option<Move> {
        let h = self.strata.len();
        if h < 2 {
            return None;
        }
        let src = rng.gen_range(0..h);
        let mut dst = rng.gen_range(0..h - 1);
        if dst >= src {
            dst += 1;
        }
        let members = &self.strata[src].members;
        let take = q.clamp(1, members.len());
        let ids = sample(rng, members.len(), take).into_iter().map(|i| members[i]).collect();
        Some(Move {
            source: src + 1,
            destination: Destination::Existing(dst + 1),
            ids,
        })
    }

    /// Applies `mv` and re-evaluates by delta: only the touched strata are
    /// re-pooled and the allocation starts from the current weights.
    pub fn apply_move(&mut self, mv: &Move) -> Result<Undo, StateError> {
        let h = self.strata.len();
        if mv.source == 0 || mv.source > h {
            return Err(StateError::InvalidMove(format!("source stratum {} out of range", mv.source)));
        }
        let dest = match mv.destination {
            Destination::Existing(d) if d == 0 || d > h => {
                return Err(StateError::InvalidMove(format!("destination stratum {d} out of range")))
            }
            Destination::Existing(d) if d == mv.source => {
                return Err(StateError::InvalidMove("source and destination coincide".into()))
            }
            Destination::Existing(d) => Some(d - 1),
            Destination::New => None,
        };
        if mv.ids.is_empty() {
            return Err(StateError::InvalidMove("no atomic strata to move".into()));
        }
        for &id in &mv.ids {
            if id >= self.labels.len() || self.labels[id] != mv.source - 1 {
                return Err(StateError::InvalidMove(format!(
                    "atomic stratum {id} is not in stratum {}",
                    mv.source
                )));
            }
        }
        self.relocate(&mv.ids, dest)
    }

    /// Applies then reverts `mv`, returning the cost it would have.
    pub fn delta_evaluate(&mut self, mv: &Move) -> Result<f64, StateError> {
        let undo = self.apply_move(mv)?;
        let cost = self.cost;
        self.revert_move(undo)?;
        Ok(cost)
    }

    /// Sends each atomic stratum, independently with probability `p`, to one
    /// shared new stratum. Applied unconditionally and evaluated with a
    /// single batched delta. `None` when nothing was selected.
    pub fn inject_new_stratum<R: Rng + ?Sized>(&mut self, p: f64, rng: &mut R) -> Result<Option<Undo>, StateError> {
        let ids: Vec<usize> = (0..self.labels.len()).filter(|_| rng.gen::<f64>() < p).collect();
        if ids.is_empty() {
            return Ok(None);
        }
        self.relocate(&ids, None).map(Some)
    }

    fn relocate(&mut self, ids: &[usize], dest: Option<usize>) -> Result<Undo, StateError> {
        let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &id in ids {
            by_source.entry(self.labels[id]).or_default().push(id);
        }
        for (s, list) in by_source.iter_mut() {
            list.sort_unstable();
            let before = list.len();
            list.dedup();
            if list.len() != before {
                return Err(StateError::InvalidMove("atomic stratum listed twice".into()));
            }
            if Some(*s) == dest {
                return Err(StateError::InvalidMove("atomic stratum already in destination".into()));
            }
        }
        let emptied: Vec<usize> = by_source
            .iter()
            .filter(|(s, list)| list.len() == self.strata[**s].members.len())
            .map(|(s, _)| *s)
            .collect();

        let mut touched: Vec<(usize, Stratum)> = by_source.keys().map(|&s| (s, self.strata[s].clone())).collect();
        if let Some(d) = dest {
            touched.push((d, self.strata[d].clone()));
        }
        let full_labels = (!emptied.is_empty()).then(|| self.labels.clone());
        let moved: Vec<(usize, usize)> = ids.iter().map(|&id| (id, self.labels[id])).collect();
        let prev = (self.alphas.clone(), self.n.clone(), self.cost, self.converged, self.iterations);

        let dest_idx = match dest {
            Some(d) => d,
            None => {
                self.strata.push(Stratum {
                    members: Vec::new(),
                    moments: Moments::zero(self.problem.targets()),
                    variance: vec![0.0; self.problem.targets()],
                });
                self.strata.len() - 1
            }
        };
        for (&s, list) in &by_source {
            self.strata[s].members.retain(|m| list.binary_search(m).is_err());
        }
        let dm = &mut self.strata[dest_idx].members;
        dm.extend_from_slice(ids);
        dm.sort_unstable();
        for &id in ids {
            self.labels[id] = dest_idx;
        }
        for &s in by_source.keys() {
            if !emptied.contains(&s) {
                self.refresh(s);
            }
        }
        self.refresh(dest_idx);

        if !emptied.is_empty() {
            for &e in emptied.iter().rev() {
                self.strata.remove(e);
            }
            let before = self.strata.len() + emptied.len();
            let mut remap = Vec::with_capacity(before);
            let mut shift = 0;
            for i in 0..before {
                if emptied.binary_search(&i).is_ok() {
                    shift += 1;
                    remap.push(usize::MAX);
                } else {
                    remap.push(i - shift);
                }
            }
            for l in self.labels.iter_mut() {
                *l = remap[*l];
            }
        }

        self.reallocate(false);
        self.epoch_counter += 1;
        let undo = Undo {
            epoch: self.epoch_counter,
            prev_epoch: self.epoch,
            moved,
            touched,
            emptied,
            created: dest.is_none(),
            full_labels,
            alphas: prev.0,
            n: prev.1,
            cost: prev.2,
            converged: prev.3,
            iterations: prev.4,
        };
        self.epoch = undo.epoch;
        Ok(undo)
    }

    /// Restores the state captured by `undo`. Only the most recent
    /// unreverted move can be undone.
    pub fn revert_move(&mut self, undo: Undo) -> Result<(), StateError> {
        if undo.epoch != self.epoch {
            return Err(StateError::StaleUndo);
        }
        if undo.created {
            self.strata.pop();
        }
        for &e in &undo.emptied {
            self.strata.insert(
                e,
                Stratum {
                    members: Vec::new(),
                    moments: Moments::zero(0),
                    variance: Vec::new(),
                },
            );
        }
        for (idx, s) in undo.touched {
            self.strata[idx] = s;
        }
        match undo.full_labels {
            Some(labels) => self.labels = labels,
            None => {
                for (id, old) in undo.moved {
                    self.labels[id] = old;
                }
            }
        }
        self.alphas = undo.alphas;
        self.n = undo.n;
        self.cost = undo.cost;
        self.converged = undo.converged;
        self.iterations = undo.iterations;
        self.epoch = undo.prev_epoch;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::AtomicStratum;
    use crate::synthetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn six() -> DomainProblem {
        let strata = (0..6)
            .map(|i| {
                let base = (i as f64) * 3.0;
                AtomicStratum::from_values(
                    vec![format!("a{i}")],
                    "d",
                    &[vec![base + 1.0], vec![base + 2.5], vec![base + 4.0 + i as f64]],
                )
            })
            .collect();
        DomainProblem::new("d", strata, vec![0.05]).unwrap()
    }

    #[test]
    fn emptying_move_relabels_like_the_vector_example() {
        let p = six();
        let mut s = StrataState::new(&p, &[1, 2, 1, 3, 3, 3], EvalOptions::default()).unwrap();
        let before = s.snapshot();
        let mv = Move {
            source: 2,
            destination: Destination::Existing(1),
            ids: vec![1],
        };
        let undo = s.apply_move(&mv).unwrap();
        assert!(undo.source_emptied());
        assert_eq!(s.labels(), vec![1, 1, 1, 2, 2, 2]);
        assert_eq!(s.strata_count(), 2);
        s.revert_move(undo).unwrap();
        assert_eq!(s.snapshot(), before);
    }

    #[test]
    fn perturb_clamps_q_and_picks_distinct_strata() {
        let p = six();
        let s = StrataState::new(&p, &[1, 2, 1, 3, 3, 3], EvalOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let mv = s.perturb(50, &mut rng).unwrap();
            let Destination::Existing(d) = mv.destination else { panic!() };
            assert_ne!(d, mv.source);
            assert_eq!(mv.ids.len(), s.members(mv.source).len());
        }
        let one = StrataState::new(&p, &[1; 6], EvalOptions::default()).unwrap();
        assert!(one.perturb(1, &mut rng).is_none());
    }

    #[test]
    fn invalid_moves_rejected() {
        let p = six();
        let mut s = StrataState::new(&p, &[1, 2, 1, 3, 3, 3], EvalOptions::default()).unwrap();
        let bad = |source, destination, ids: Vec<usize>| Move {
            source,
            destination,
            ids,
        };
        assert!(s.apply_move(&bad(1, Destination::Existing(1), vec![0])).is_err());
        assert!(s.apply_move(&bad(1, Destination::Existing(2), vec![1])).is_err());
        assert!(s.apply_move(&bad(4, Destination::Existing(2), vec![0])).is_err());
        assert!(s.apply_move(&bad(1, Destination::Existing(2), vec![])).is_err());
        assert!(s.apply_move(&bad(1, Destination::Existing(2), vec![0, 0])).is_err());
    }

    #[test]
    fn stale_undo_is_an_error() {
        let p = six();
        let mut s = StrataState::new(&p, &[1, 2, 1, 3, 3, 3], EvalOptions::default()).unwrap();
        let mv = Move {
            source: 3,
            destination: Destination::Existing(1),
            ids: vec![4],
        };
        let first = s.apply_move(&mv).unwrap();
        let mv2 = Move {
            source: 3,
            destination: Destination::Existing(2),
            ids: vec![5],
        };
        let second = s.apply_move(&mv2).unwrap();
        assert!(matches!(s.revert_move(first), Err(StateError::StaleUndo)));
        s.revert_move(second).unwrap();
    }

    #[test]
    fn injection_extremes() {
        let p = six();
        let mut s = StrataState::new(&p, &[1, 2, 1, 3, 3, 3], EvalOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let before = s.snapshot();
        assert!(s.inject_new_stratum(0.0, &mut rng).unwrap().is_none());
        assert_eq!(s.snapshot(), before);
        let undo = s.inject_new_stratum(1.0, &mut rng).unwrap().unwrap();
        assert_eq!(s.labels(), vec![1; 6]);
        assert_eq!(s.strata_count(), 1);
        assert_eq!(undo.emptied_count(), 3);
        s.revert_move(undo).unwrap();
        assert_eq!(s.snapshot(), before);
    }

    #[test]
    fn delta_touches_two_strata() {
        let p = synthetic::problem(&synthetic::SyntheticSpec::new(40, 2), 5);
        let labels: Vec<usize> = (0..40).map(|i| i % 5 + 1).collect();
        let mut s = StrataState::new(&p, &labels, EvalOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let untouched_before = s.summaries();
        let mv = s.perturb(1, &mut rng).unwrap();
        let c0 = s.recompute_count();
        let undo = s.apply_move(&mv).unwrap();
        assert_eq!(s.recompute_count() - c0, 2);
        let Destination::Existing(d) = mv.destination else { panic!() };
        let after = s.summaries();
        for h in 1..=5 {
            if h != mv.source && h != d {
                assert_eq!(after[h - 1], untouched_before[h - 1]);
            }
        }
        s.revert_move(undo).unwrap();
    }
}
