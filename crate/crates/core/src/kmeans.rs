//! Weighted Lloyd's k-means with k-means++ seeding.
//!
//! Shared by continuous-variable binning (one dimension, distinct values
//! weighted by multiplicity) and by the k-means initial stratifications
//! (standardized target means per atomic stratum).

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KMeansError {
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("k = {k} exceeds the number of points ({points})")]
    TooManyClusters { k: usize, points: usize },
    #[error("point buffer length {len} is not a multiple of dimension {dim}")]
    Shape { len: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Cluster index per point, every index in `0..k` used at least once.
    pub assignments: Vec<usize>,
    /// Row-major `k × dim` centers.
    pub centers: Vec<f64>,
    /// Weighted within-cluster sum of squares.
    pub inertia: f64,
}

const MAX_LLOYD_ITERS: usize = 300;

/// Clusters `points` (row-major, `dim` columns) into exactly `k` nonempty
/// clusters, keeping the lowest-inertia run out of `restarts` (at least one).
pub fn kmeans<R: Rng + ?Sized>(
    points: &[f64],
    dim: usize,
    weights: Option<&[f64]>,
    k: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<KMeansFit, KMeansError> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(KMeansError::Shape {
            len: points.len(),
            dim,
        });
    }
    let n = points.len() / dim;
    if k == 0 {
        return Err(KMeansError::ZeroClusters);
    }
    if k > n {
        return Err(KMeansError::TooManyClusters { k, points: n });
    }
    let unit;
    let weights = match weights {
        Some(w) => w,
        None => {
            unit = vec![1.0; n];
            &unit
        }
    };

    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let fit = lloyd(points, dim, weights, k, rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centers<R: Rng + ?Sized>(
    points: &[f64],
    dim: usize,
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = weights.len();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(draw_weighted(weights, rng).unwrap_or_else(|| rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(&points[i * dim..(i + 1) * dim], &points[chosen[0] * dim..(chosen[0] + 1) * dim]))
        .collect();
    while chosen.len() < k {
        let scores: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let next = match draw_weighted(&scores, rng) {
            Some(i) => i,
            None => {
                // every remaining point coincides with a center
                let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
                free[rng.gen_range(0..free.len())]
            }
        };
        chosen.push(next);
        let c = &points[next * dim..(next + 1) * dim];
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = sq_dist(&points[i * dim..(i + 1) * dim], c);
            if nd < *d {
                *d = nd;
            }
        }
    }
    chosen
}

fn draw_weighted<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let mut target = rng.gen::<f64>() * total;
    let mut last_positive = None;
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 {
            last_positive = Some(i);
            if target < s {
                return Some(i);
            }
            target -= s;
        }
    }
    last_positive
}

fn lloyd<R: Rng + ?Sized>(
    points: &[f64],
    dim: usize,
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> KMeansFit {
    let n = weights.len();
    let seeds = seed_centers(points, dim, weights, k, rng);
    let mut centers: Vec<f64> = seeds
        .iter()
        .flat_map(|&i| points[i * dim..(i + 1) * dim].iter().copied())
        .collect();
    let mut assignments = vec![usize::MAX; n];

    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for i in 0..n {
            let p = &points[i * dim..(i + 1) * dim];
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(p, &centers[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        changed |= repair_empty(points, dim, k, &mut assignments, &mut centers);
        update_centers(points, dim, weights, k, &assignments, &mut centers);
        if !changed {
            break;
        }
    }

    let inertia = (0..n)
        .map(|i| {
            let c = assignments[i];
            weights[i] * sq_dist(&points[i * dim..(i + 1) * dim], &centers[c * dim..(c + 1) * dim])
        })
        .sum();
    KMeansFit {
        assignments,
        centers,
        inertia,
    }
}

fn update_centers(
    points: &[f64],
    dim: usize,
    weights: &[f64],
    k: usize,
    assignments: &[usize],
    centers: &mut [f64],
) {
    let mut acc = vec![0.0; k * dim];
    let mut mass = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        let w = weights[i];
        mass[c] += w;
        count[c] += 1;
        for d in 0..dim {
            acc[c * dim + d] += w * points[i * dim + d];
        }
    }
    for c in 0..k {
        if mass[c] > 0.0 {
            for d in 0..dim {
                centers[c * dim + d] = acc[c * dim + d] / mass[c];
            }
        } else if count[c] > 0 {
            // zero-weight members only: fall back to the plain mean
            let members: Vec<usize> = (0..assignments.len()).filter(|&i| assignments[i] == c).collect();
            for d in 0..dim {
                centers[c * dim + d] =
                    members.iter().map(|&i| points[i * dim + d]).sum::<f64>() / members.len() as f64;
            }
        }
    }
}

/// Moves the point farthest from its center in the largest cluster into each
/// empty cluster. Returns whether anything moved.
fn repair_empty(
    points: &[f64],
    dim: usize,
    k: usize,
    assignments: &mut [usize],
    centers: &mut [f64],
) -> bool {
    let mut moved = false;
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assignments.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return moved;
        };
        let largest = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap();
        let center = centers[largest * dim..(largest + 1) * dim].to_vec();
        let far = (0..assignments.len())
            .filter(|&i| assignments[i] == largest)
            .max_by(|&a, &b| {
                let da = sq_dist(&points[a * dim..(a + 1) * dim], &center);
                let db = sq_dist(&points[b * dim..(b + 1) * dim], &center);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap();
        assignments[far] = empty;
        centers[empty * dim..(empty + 1) * dim].copy_from_slice(&points[far * dim..(far + 1) * dim]);
        moved = true;
    }
}
