//! Result rows: one CSV per experiment, a `# format_version=N` comment line,
//! then a header row. Rows are sorted by `(experiment_id, n, replicate,
//! statistic)`, which is also the uniqueness key.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESULTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub n: u64,
    pub replicate: u64,
    pub seed: u64,
    pub statistic: String,
    /// Empty when the statistic is undefined.
    pub value: Option<f64>,
    pub defined: bool,
}

impl ResultRow {
    pub fn new(
        experiment_id: &str,
        n: u64,
        replicate: u64,
        seed: u64,
        statistic: impl Into<String>,
        value: Option<f64>,
    ) -> Self {
        Self {
            experiment_id: experiment_id.to_string(),
            n,
            replicate,
            seed,
            statistic: statistic.into(),
            defined: value.is_some(),
            value,
        }
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        (&self.experiment_id, self.n, self.replicate, &self.statistic).cmp(&(
            &other.experiment_id,
            other.n,
            other.replicate,
            &other.statistic,
        ))
    }
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(ResultRow::key_cmp);
}

/// Fails on a repeated `(experiment_id, n, replicate, statistic)` key.
pub fn check_unique(rows: &[ResultRow]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in rows {
        if !seen.insert((&r.experiment_id, r.n, r.replicate, &r.statistic)) {
            return Err(Error::Config(format!(
                "duplicate result key ({}, {}, {}, {})",
                r.experiment_id, r.n, r.replicate, r.statistic
            )));
        }
    }
    Ok(())
}

pub fn write_rows<W: Write>(mut out: W, rows: &[ResultRow]) -> Result<()> {
    writeln!(out, "# format_version={RESULTS_FORMAT_VERSION}")?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: BufRead>(mut input: R) -> Result<Vec<ResultRow>> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let version = first
        .trim()
        .strip_prefix("# format_version=")
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| Error::Parse("results file lacks a format_version line".into()))?;
    if version != RESULTS_FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported results format_version {version}")));
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}
