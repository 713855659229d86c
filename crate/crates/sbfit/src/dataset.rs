//! Dataset ingestion.
//!
//! Input files are CSV with a header row: every column numeric, the last
//! column the response, every earlier column a covariate. Parse problems
//! are reported with their row and column; rows are counted from 1
//! including the header (so the first data row is row 2, matching what an
//! editor shows).

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use std::path::Path;

/// How covariate intervals are fixed when loading a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum IntervalPolicy {
    /// Use these `[lo, hi]` pairs, one per covariate, and reject any
    /// value outside them.
    Declared(Vec<(f64, f64)>),
    /// Infer each interval as the column's `[min, max]`.
    Infer,
}

/// A loaded regression dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Covariate names from the header, in column order.
    pub names: Vec<String>,
    /// Response column name (the file's last column).
    pub response_name: String,
    /// Covariate columns, each of length `n`.
    pub columns: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
    /// Per-covariate interval actually in force.
    pub intervals: Vec<(f64, f64)>,
    /// Whether the intervals were declared by the caller rather than
    /// inferred from the data — recorded so runs are auditable.
    pub declared_intervals: bool,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Evaluation grids spanning each covariate's interval.
    pub fn grids(&self, grid_size: usize) -> Result<Vec<Grid1D>> {
        self.intervals
            .iter()
            .map(|&(lo, hi)| Grid1D::new(lo, hi, grid_size))
            .collect()
    }
}

fn from_csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("malformed CSV: {other:?}")),
    }
}

/// Load a dataset from `path` under the given interval policy.
pub fn load_csv(path: &Path, policy: &IntervalPolicy) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(from_csv_error)?;

    let header = reader.headers().map_err(from_csv_error)?.clone();
    if header.len() < 2 {
        return Err(Error::Data(format!(
            "need at least one covariate column and a response column, got {} column(s)",
            header.len()
        )));
    }
    let dim = header.len() - 1;
    let names: Vec<String> = header.iter().take(dim).map(str::to_string).collect();
    let response_name = header[dim].to_string();
    for (j, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::Data(format!("column {} has an empty header name", j + 1)));
        }
        if names[..j].contains(name) || *name == response_name {
            return Err(Error::Data(format!("duplicate column name '{name}'")));
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut responses: Vec<f64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, counting the header line
        let record = record.map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Data(format!(
                "row {row}: expected {expected_len} fields, found {len}"
            )),
            other => Error::Data(format!("row {row}: malformed CSV: {other:?}")),
        })?;
        for (j, field) in record.iter().enumerate() {
            let col_name = if j < dim { &names[j] } else { &response_name };
            if field.is_empty() {
                return Err(Error::Data(format!(
                    "missing value at row {row}, column '{col_name}'"
                )));
            }
            let value: f64 = field.parse().map_err(|_| {
                Error::Data(format!(
                    "row {row}, column '{col_name}': cannot parse '{field}' as a number"
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::Data(format!(
                    "row {row}, column '{col_name}': non-finite value '{field}'"
                )));
            }
            if j < dim {
                columns[j].push(value);
            } else {
                responses.push(value);
            }
        }
    }

    let n = responses.len();
    if n <= dim + 1 {
        return Err(Error::Data(format!(
            "need more than {} rows for {dim} covariate(s), got {n}",
            dim + 1
        )));
    }

    let (intervals, declared_intervals) = match policy {
        IntervalPolicy::Declared(given) => {
            if given.len() != dim {
                return Err(Error::Config(format!(
                    "{} interval(s) declared for {dim} covariate(s)",
                    given.len()
                )));
            }
            for (j, &(lo, hi)) in given.iter().enumerate() {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return Err(Error::Config(format!(
                        "interval [{lo}, {hi}] for column '{}' is not a valid range",
                        names[j]
                    )));
                }
                for (i, &v) in columns[j].iter().enumerate() {
                    if v < lo || v > hi {
                        return Err(Error::Data(format!(
                            "row {}, column '{}': value {v} outside the declared interval [{lo}, {hi}]",
                            i + 2,
                            names[j]
                        )));
                    }
                }
            }
            (given.clone(), true)
        }
        IntervalPolicy::Infer => {
            let mut inferred = Vec::with_capacity(dim);
            for (j, col) in columns.iter().enumerate() {
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if lo >= hi {
                    return Err(Error::Data(format!(
                        "column '{}' is constant; cannot infer a nondegenerate interval",
                        names[j]
                    )));
                }
                inferred.push((lo, hi));
            }
            (inferred, false)
        }
    };

    Ok(Dataset {
        names,
        response_name,
        columns,
        responses,
        intervals,
        declared_intervals,
    })
}
