//! Sampling-frame ingestion and atomic strata.
//!
//! Records are read from a headed CSV, continuous auxiliaries are binned with a
//! one-dimensional k-means, and the cross-classification of auxiliary labels
//! inside each domain yields the atomic strata. Only sufficient statistics
//! (count, Σy, Σy²) are kept per atomic stratum.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kmeans::{kmeans, KMeansError};

/// Restarts used by [`bin_continuous`].
pub const BIN_RESTARTS: usize = 10;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("column `{0}` is missing from the CSV header")]
    MissingColumn(String),
    #[error("line {line}: target `{column}` has non-numeric or missing value {value:?}")]
    BadTarget {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: auxiliary `{column}` is binned but {value:?} is not a finite number")]
    BadAux {
        line: u64,
        column: String,
        value: String,
    },
    #[error("cannot form {k} bins from {distinct} distinct values")]
    TooManyBins { k: usize, distinct: usize },
    #[error("frame has no records")]
    Empty,
    #[error("invalid domain problem: {0}")]
    Problem(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// An auxiliary column; `bins` marks it continuous and gives the bin count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxColumn {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

/// Column roles and precision limits for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSchema {
    pub target_columns: Vec<String>,
    pub aux_columns: Vec<AuxColumn>,
    pub domain_column: String,
    /// Upper CV limit per target, same order as `target_columns`. A single
    /// value is broadcast to every target.
    pub precision: Vec<f64>,
    #[serde(default)]
    pub bin_seed: u64,
}

impl FrameSchema {
    pub fn validate(&self) -> Result<(), FrameError> {
        let bad = |m: String| Err(FrameError::Schema(m));
        if self.target_columns.is_empty() {
            return bad("at least one target column is required".into());
        }
        if self.aux_columns.is_empty() {
            return bad("at least one auxiliary column is required".into());
        }
        let mut seen = HashSet::new();
        for name in self
            .target_columns
            .iter()
            .chain(self.aux_columns.iter().map(|a| &a.name))
        {
            if name == &self.domain_column {
                return bad(format!("domain column `{name}` is also used as a target or auxiliary"));
            }
            if !seen.insert(name.as_str()) {
                return bad(format!("column `{name}` is listed twice"));
            }
        }
        if let Some(a) = self.aux_columns.iter().find(|a| a.bins == Some(0)) {
            return bad(format!("auxiliary `{}` has zero bins", a.name));
        }
        if self.precision.len() != 1 && self.precision.len() != self.target_columns.len() {
            return bad(format!(
                "{} precision limits given for {} targets",
                self.precision.len(),
                self.target_columns.len()
            ));
        }
        if self.precision.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return bad("precision limits must be positive and finite".into());
        }
        Ok(())
    }

    /// Precision limits expanded to one per target.
    pub fn precision_per_target(&self) -> Vec<f64> {
        if self.precision.len() == 1 {
            vec![self.precision[0]; self.target_columns.len()]
        } else {
            self.precision.clone()
        }
    }
}

/// One frame row restricted to the columns named in the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub domain: String,
    pub aux_values: Vec<String>,
    pub targets: Vec<f64>,
}

/// Sufficient statistics of one cell of the auxiliary cross-classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicStratum {
    pub key: Vec<String>,
    pub domain: String,
    pub count: u64,
    pub sums: Vec<f64>,
    pub sumsq: Vec<f64>,
}

impl AtomicStratum {
    pub fn from_values(key: Vec<String>, domain: impl Into<String>, rows: &[Vec<f64>]) -> Self {
        let g = rows.first().map_or(0, Vec::len);
        let mut s = AtomicStratum {
            key,
            domain: domain.into(),
            count: 0,
            sums: vec![0.0; g],
            sumsq: vec![0.0; g],
        };
        for r in rows {
            s.push(r);
        }
        s
    }

    fn push(&mut self, targets: &[f64]) {
        self.count += 1;
        for (g, &y) in targets.iter().enumerate() {
            self.sums[g] += y;
            self.sumsq[g] += y * y;
        }
    }

    pub fn mean(&self, g: usize) -> f64 {
        self.sums[g] / self.count as f64
    }
}

/// All atomic strata of one domain with its precision limits and frame totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProblem {
    pub domain: String,
    #[serde(default)]
    pub target_names: Vec<String>,
    pub precision: Vec<f64>,
    pub totals: Vec<f64>,
    pub atomic_strata: Vec<AtomicStratum>,
}

impl DomainProblem {
    /// Builds a problem, deriving the totals from the atomic strata.
    pub fn new(
        domain: impl Into<String>,
        atomic_strata: Vec<AtomicStratum>,
        precision: Vec<f64>,
    ) -> Result<Self, FrameError> {
        let g = precision.len();
        let totals = (0..g)
            .map(|t| atomic_strata.iter().map(|a| a.sums.get(t).copied().unwrap_or(0.0)).sum())
            .collect();
        let p = DomainProblem {
            domain: domain.into(),
            target_names: Vec::new(),
            precision,
            totals,
            atomic_strata,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_target_names(mut self, names: Vec<String>) -> Self {
        self.target_names = names;
        self
    }

    /// Number of atomic strata, `L`.
    pub fn len(&self) -> usize {
        self.atomic_strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atomic_strata.is_empty()
    }

    /// Number of targets, `G`.
    pub fn targets(&self) -> usize {
        self.precision.len()
    }

    pub fn record_count(&self) -> u64 {
        self.atomic_strata.iter().map(|a| a.count).sum()
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        let bad = |m: String| Err(FrameError::Problem(m));
        let g = self.precision.len();
        if self.atomic_strata.is_empty() {
            return bad(format!("domain `{}` has no atomic strata", self.domain));
        }
        if g == 0 {
            return bad("no targets".into());
        }
        if self.totals.len() != g {
            return bad(format!("{} totals for {g} targets", self.totals.len()));
        }
        if self.precision.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return bad("precision limits must be positive and finite".into());
        }
        for (l, a) in self.atomic_strata.iter().enumerate() {
            if a.domain != self.domain {
                return bad(format!("atomic stratum {l} belongs to domain `{}`", a.domain));
            }
            if a.count == 0 {
                return bad(format!("atomic stratum {l} is empty"));
            }
            if a.sums.len() != g || a.sumsq.len() != g {
                return bad(format!("atomic stratum {l} has the wrong number of targets"));
            }
            for t in 0..g {
                let (s, q) = (a.sums[t], a.sumsq[t]);
                if !s.is_finite() || !q.is_finite() {
                    return bad(format!("atomic stratum {l} has non-finite statistics"));
                }
                let floor = s * s / a.count as f64;
                if q < floor - 1e-9 * floor.abs().max(1.0) {
                    return bad(format!("atomic stratum {l} target {t} has negative variance"));
                }
            }
        }
        Ok(())
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, FrameError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| FrameError::MissingColumn(name.to_string()))
}

/// Reads the schema's columns from a CSV file.
pub fn load_frame(path: impl AsRef<Path>, schema: &FrameSchema) -> Result<Vec<FrameRecord>, FrameError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| FrameError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_frame(file, schema)
}

pub fn read_frame<R: Read>(reader: R, schema: &FrameSchema) -> Result<Vec<FrameRecord>, FrameError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let domain_idx = column_index(&headers, &schema.domain_column)?;
    let target_idx = schema
        .target_columns
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>, _>>()?;
    let aux_idx = schema
        .aux_columns
        .iter()
        .map(|c| column_index(&headers, &c.name))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let mut targets = Vec::with_capacity(target_idx.len());
        for (&i, name) in target_idx.iter().zip(&schema.target_columns) {
            let raw = field(i);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => targets.push(v),
                _ => {
                    return Err(FrameError::BadTarget {
                        line,
                        column: name.clone(),
                        value: raw.to_string(),
                    })
                }
            }
        }
        let mut aux_values = Vec::with_capacity(aux_idx.len());
        for (&i, col) in aux_idx.iter().zip(&schema.aux_columns) {
            let raw = field(i);
            if col.bins.is_some() && !raw.parse::<f64>().is_ok_and(f64::is_finite) {
                return Err(FrameError::BadAux {
                    line,
                    column: col.name.clone(),
                    value: raw.to_string(),
                });
            }
            aux_values.push(raw.to_string());
        }
        out.push(FrameRecord {
            domain: field(domain_idx).to_string(),
            aux_values,
            targets,
        });
    }
    Ok(out)
}

/// One-dimensional k-means binning. Labels are cluster indices ordered by
/// cluster center, so label 0 holds the smallest values.
pub fn bin_continuous(values: &[f64], k: usize, seed: u64) -> Result<Vec<usize>, FrameError> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if k == 0 || k > distinct.len() {
        return Err(FrameError::TooManyBins {
            k,
            distinct: distinct.len(),
        });
    }
    let mut weights = vec![0.0; distinct.len()];
    for v in values {
        let i = distinct.binary_search_by(|d| d.total_cmp(v)).expect("value present");
        weights[i] += 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit = kmeans(&distinct, 1, Some(&weights), k, BIN_RESTARTS, &mut rng).map_err(|e| match e {
        KMeansError::TooManyClusters { k, points } => FrameError::TooManyBins { k, distinct: points },
        other => FrameError::Schema(other.to_string()),
    })?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| fit.centers[a].total_cmp(&fit.centers[b]));
    let mut rank = vec![0; k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    Ok(values
        .iter()
        .map(|v| {
            let i = distinct.binary_search_by(|d| d.total_cmp(v)).expect("value present");
            rank[fit.assignments[i]]
        })
        .collect())
}

/// Replaces the raw values of every binned auxiliary with its bin label
/// (zero-padded so that lexical and numeric order agree).
pub fn discretize(records: &mut [FrameRecord], schema: &FrameSchema) -> Result<(), FrameError> {
    for (a, col) in schema.aux_columns.iter().enumerate() {
        let Some(k) = col.bins else { continue };
        let values = records
            .iter()
            .map(|r| {
                r.aux_values[a].parse::<f64>().map_err(|_| FrameError::BadAux {
                    line: 0,
                    column: col.name.clone(),
                    value: r.aux_values[a].clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let labels = bin_continuous(&values, k, schema.bin_seed.wrapping_add(a as u64))?;
        let width = (k - 1).to_string().len();
        for (r, l) in records.iter_mut().zip(labels) {
            r.aux_values[a] = format!("{l:0width$}");
        }
    }
    Ok(())
}

/// Groups records by domain, then by auxiliary-label tuple. Domains and keys
/// are ordered lexically; empty cells never appear.
pub fn build_atomic_strata(
    records: &[FrameRecord],
    schema: &FrameSchema,
) -> Result<Vec<DomainProblem>, FrameError> {
    schema.validate()?;
    if records.is_empty() {
        return Err(FrameError::Empty);
    }
    let g = schema.target_columns.len();
    let mut domains: BTreeMap<&str, BTreeMap<&[String], AtomicStratum>> = BTreeMap::new();
    for r in records {
        if r.targets.len() != g || r.aux_values.len() != schema.aux_columns.len() {
            return Err(FrameError::Schema("record does not match schema shape".into()));
        }
        let cells = domains.entry(r.domain.as_str()).or_default();
        cells
            .entry(r.aux_values.as_slice())
            .or_insert_with(|| AtomicStratum {
                key: r.aux_values.clone(),
                domain: r.domain.clone(),
                count: 0,
                sums: vec![0.0; g],
                sumsq: vec![0.0; g],
            })
            .push(&r.targets);
    }
    let precision = schema.precision_per_target();
    domains
        .into_iter()
        .map(|(d, cells)| {
            DomainProblem::new(d, cells.into_values().collect(), precision.clone())
                .map(|p| p.with_target_names(schema.target_columns.clone()))
        })
        .collect()
}

/// Loads, bins and aggregates a frame in one call.
pub fn prepare(path: impl AsRef<Path>, schema: &FrameSchema) -> Result<Vec<DomainProblem>, FrameError> {
    let mut records = load_frame(path, schema)?;
    discretize(&mut records, schema)?;
    build_atomic_strata(&records, schema)
}

/// File name used for a domain's atomic-strata JSON.
pub fn domain_file_stem(domain: &str) -> String {
    let clean: String = domain
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("domain_{clean}")
}

pub fn write_problem_json(path: impl AsRef<Path>, problem: &DomainProblem) -> Result<(), FrameError> {
    let path = path.as_ref();
    let io = |source| FrameError::Io {
        path: path.display().to_string(),
        source,
    };
    let text = serde_json::to_string_pretty(problem).map_err(|e| io(e.into()))?;
    std::fs::write(path, text + "\n").map_err(io)
}

pub fn read_problem_json(path: impl AsRef<Path>) -> Result<DomainProblem, FrameError> {
    let path = path.as_ref();
    let io = |source| FrameError::Io {
        path: path.display().to_string(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(io)?;
    let p: DomainProblem = serde_json::from_str(&text).map_err(|e| io(e.into()))?;
    p.validate()?;
    Ok(p)
}
