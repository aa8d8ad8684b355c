//! Joint stratification and sample allocation for stratified survey designs.
//!
//! A sampling frame is cross-classified on its auxiliary columns into *atomic
//! strata*. A stratification is a set partition of those atomic strata, and its
//! cost is the minimum total sample size that keeps the coefficient of
//! variation of every target total under its precision limit, as computed by
//! the Bethel-Chromy allocation. The search over partitions is a simulated
//! annealer whose neighbour evaluations only recompute the strata touched by
//! each move and warm-start the Lagrange weights from the current solution.
//!
//! Module map:
//!
//! - [`frame`]: CSV ingestion, continuous-variable binning, atomic strata per domain.
//! - [`allocation`]: stratum pooling, the ξ transform, Bethel-Chromy, achieved CVs.
//! - [`state`]: mutable stratification with apply/revert moves and delta evaluation.
//! - [`annealer`]: the simulated annealing driver and its trace.
//! - [`seeding`]: k-means initial stratifications selected by allocation cost.
//! - [`oracle`]: exhaustive set-partition enumeration for small problems.
//! - [`tuner`]: Latin hypercube design plus local random proposals over annealer settings.
//! - [`runner`]: seeded, parallel per-domain optimization.

pub mod allocation;
pub mod annealer;
pub mod frame;
pub mod kmeans;
pub mod oracle;
pub mod partition;
pub mod runner;
pub mod seeding;
pub mod state;
pub mod synthetic;
pub mod tuner;

mod error;

pub use allocation::{
    achieved_cv, bethel_allocate, compute_xi, evaluate, pool_summaries, Allocation, BethelParams,
    ClampPolicy, EvalOptions, Evaluation, StratumSummary, VarianceKind, XiMatrix,
};
pub use annealer::{anneal, AnnealOutcome, AnnealTrace, SaConfig, SequenceRecord};
pub use error::{Error, Result};
pub use frame::{AtomicStratum, DomainProblem, FrameRecord, FrameSchema};
pub use state::{Destination, Move, StrataState, Undo};
