//! Seeded synthetic domain problems for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::{AtomicStratum, DomainProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Number of atomic strata, `L`.
    pub atomic: usize,
    /// Number of targets, `G`.
    pub targets: usize,
    pub min_count: u64,
    pub max_count: u64,
    /// CV limit applied to every target.
    pub precision: f64,
}

impl SyntheticSpec {
    pub fn new(atomic: usize, targets: usize) -> Self {
        SyntheticSpec {
            atomic,
            targets,
            min_count: 2,
            max_count: 40,
            precision: 0.05,
        }
    }

    pub fn with_precision(mut self, precision: f64) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_counts(mut self, min: u64, max: u64) -> Self {
        self.min_count = min;
        self.max_count = max;
        self
    }
}

/// Raw unit values per atomic stratum: `rows[l][unit][g]`.
pub fn raw_values(spec: &SyntheticSpec, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = (spec.atomic / 4).max(1);
    let centers: Vec<f64> = (0..groups).map(|_| 10f64.powf(rng.gen_range(0.5..2.5))).collect();
    (0..spec.atomic)
        .map(|_| {
            let center = centers[rng.gen_range(0..groups)] * rng.gen_range(0.8..1.25);
            let spread = center * rng.gen_range(0.05..0.6);
            let count = rng.gen_range(spec.min_count..=spec.max_count);
            (0..count)
                .map(|_| {
                    let y0 = (center + spread * (rng.gen::<f64>() - 0.5) * 3.4).max(0.0);
                    (0..spec.targets)
                        .map(|g| match g {
                            0 => y0,
                            _ => {
                                let mix = 0.4 + 0.5 * rng.gen::<f64>();
                                (mix * y0 * (g as f64 + 1.0) + (1.0 - mix) * rng.gen_range(0.0..center)).max(0.0)
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// A single-domain problem built from [`raw_values`].
pub fn problem(spec: &SyntheticSpec, seed: u64) -> DomainProblem {
    let strata = raw_values(spec, seed)
        .iter()
        .enumerate()
        .map(|(l, rows)| AtomicStratum::from_values(vec![format!("{l:05}")], "synthetic", rows))
        .collect();
    DomainProblem::new("synthetic", strata, vec![spec.precision; spec.targets])
        .expect("synthetic problems are valid")
        .with_target_names((1..=spec.targets).map(|g| format!("y{g}")).collect())
}
