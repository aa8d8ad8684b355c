//! Label vectors and partition files.
//!
//! A stratification is a vector of 1-based stratum labels, one per atomic
//! stratum. Labels must be contiguous: `max(labels) = H` and every label in
//! `1..=H` is used.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use thiserror::Error;

use crate::frame::DomainProblem;

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("expected {expected} labels, got {got}")]
    Length { expected: usize, got: usize },
    #[error("label 0 at position {0}; labels start at 1")]
    Zero(usize),
    #[error("stratum {0} is empty (labels must be contiguous)")]
    Gap(usize),
    #[error("partition file: {0}")]
    File(String),
    #[error("partition file names unknown atomic stratum {0:?}")]
    UnknownKey(String),
    #[error("atomic stratum {0:?} is missing from the partition file")]
    MissingKey(String),
}

/// Validates contiguity and returns `H`.
pub fn check_labels(labels: &[usize], expected_len: usize) -> Result<usize, PartitionError> {
    if labels.len() != expected_len {
        return Err(PartitionError::Length {
            expected: expected_len,
            got: labels.len(),
        });
    }
    if let Some(p) = labels.iter().position(|&l| l == 0) {
        return Err(PartitionError::Zero(p));
    }
    let h = labels.iter().copied().max().unwrap_or(0);
    let mut used = vec![false; h];
    for &l in labels {
        used[l - 1] = true;
    }
    if let Some(gap) = used.iter().position(|u| !u) {
        return Err(PartitionError::Gap(gap + 1));
    }
    Ok(h)
}

/// Compresses arbitrary labels to `1..=H`, keeping their relative order.
pub fn compress_labels(labels: &[usize]) -> Vec<usize> {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("present") + 1)
        .collect()
}

/// Restricted-growth form: strata numbered by first appearance.
pub fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len() + 1;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Number of distinct labels.
pub fn strata_count(labels: &[usize]) -> usize {
    let mut d: Vec<usize> = labels.to_vec();
    d.sort_unstable();
    d.dedup();
    d.len()
}

/// Separator between auxiliary labels in a partition-file key.
pub const KEY_SEPARATOR: &str = "|";

pub fn key_string(key: &[String]) -> String {
    key.join(KEY_SEPARATOR)
}

/// Writes `atomic_stratum_key,stratum_label` rows in atomic-stratum order.
pub fn write_partition_csv(
    path: impl AsRef<Path>,
    problem: &DomainProblem,
    labels: &[usize],
) -> Result<(), PartitionError> {
    check_labels(labels, problem.len())?;
    let err = |e: csv::Error| PartitionError::File(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["atomic_stratum_key", "stratum_label"]).map_err(err)?;
    for (a, l) in problem.atomic_strata.iter().zip(labels) {
        w.write_record([key_string(&a.key), l.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| PartitionError::File(e.to_string()))
}

/// Reads a partition file for `problem`; labels are compressed to `1..=H`.
pub fn read_partition_csv(path: impl AsRef<Path>, problem: &DomainProblem) -> Result<Vec<usize>, PartitionError> {
    let err = |e: csv::Error| PartitionError::File(e.to_string());
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let mut by_key = BTreeMap::new();
    for row in r.records() {
        let row = row.map_err(err)?;
        let key = row.get(0).unwrap_or("").to_string();
        let label: usize = row
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| PartitionError::File(format!("bad label for key {key:?}")))?;
        if label == 0 {
            return Err(PartitionError::Zero(by_key.len()));
        }
        by_key.insert(key, label);
    }
    let mut labels = Vec::with_capacity(problem.len());
    for a in &problem.atomic_strata {
        let k = key_string(&a.key);
        match by_key.remove(&k) {
            Some(l) => labels.push(l),
            None => return Err(PartitionError::MissingKey(k)),
        }
    }
    if let Some((k, _)) = by_key.into_iter().next() {
        return Err(PartitionError::UnknownKey(k));
    }
    Ok(compress_labels(&labels))
}
