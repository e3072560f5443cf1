//! Experiment configuration, orchestration, and output files.
//!
//! Every experiment is a grid of independent units keyed by
//! `(n, replicate)`. A unit's seed is
//! [`unit_seed`](crate::seeds::unit_seed)`(seed_root, experiment_id, n, replicate)`,
//! so adding grid cells never perturbs existing ones. Units run through
//! [`map_units`](crate::parallel::map_units) and rows are sorted before
//! writing, so output files do not depend on the thread count.

mod calibration;
pub mod cli;
mod consistency;
mod kl;
pub mod results;
mod singleton;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use calibration::CalibrationSpec;
pub use consistency::{ConsistencySpec, SamplerSettings};
pub use kl::KlSpec;
pub use results::{read_rows, write_rows, ResultRow, RESULTS_FORMAT_VERSION};
pub use singleton::{BaseRegime, SingletonPrior, SingletonSpec};

use crate::error::{Error, Result};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ExperimentKind {
    #[serde(rename = "ESTIMATOR_CALIBRATION")]
    EstimatorCalibration(CalibrationSpec),
    #[serde(rename = "SINGLETON_INDEX_DEMO")]
    SingletonIndexDemo(SingletonSpec),
    #[serde(rename = "PARMIX_CONSISTENCY")]
    ParmixConsistency(ConsistencySpec),
    #[serde(rename = "KL_CHECKLIST")]
    KlChecklist(KlSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "config_version")]
    pub format_version: u32,
    pub experiment_id: String,
    #[serde(default)]
    pub seed_root: u64,
    #[serde(default)]
    pub sample_sizes: Vec<u64>,
    #[serde(default = "one")]
    pub replicates: u64,
    /// Overridden by `--out`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub kind: ExperimentKind,
}

fn config_version() -> u32 {
    CONFIG_FORMAT_VERSION
}

fn one() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported config format_version {}", self.format_version)));
        }
        if self.experiment_id.is_empty() || self.experiment_id.contains(['/', '\\']) {
            return Err(Error::Config(format!("experiment_id {:?} is not a valid file stem", self.experiment_id)));
        }
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sample_sizes must be strictly increasing".into()));
        }
        let needs_sizes = !matches!(self.kind, ExperimentKind::KlChecklist(_));
        if needs_sizes && self.sample_sizes.is_empty() {
            return Err(Error::Config("sample_sizes must be nonempty".into()));
        }
        match &self.kind {
            ExperimentKind::EstimatorCalibration(s) => s.validate(),
            ExperimentKind::SingletonIndexDemo(s) => s.validate(),
            ExperimentKind::ParmixConsistency(s) => s.validate(&self.sample_sizes),
            ExperimentKind::KlChecklist(s) => s.validate(),
        }
    }

    /// `(n, replicate)` grid in row-major order.
    pub(crate) fn units(&self) -> Vec<(u64, u64)> {
        self.sample_sizes.iter().flat_map(|&n| (0..self.replicates).map(move |r| (n, r))).collect()
    }
}

/// A CSV side file such as the n-versus-mass curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub experiment_id: String,
    pub rows: Vec<ResultRow>,
    pub summary: serde_json::Value,
    pub plots: Vec<PlotData>,
    /// Chains to persist, as `(file stem, chain)`.
    pub chains: Vec<(String, crate::mcmc::McmcChain)>,
}

/// Runs the experiment; rows come back sorted and key-unique.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut out = match &cfg.kind {
        ExperimentKind::EstimatorCalibration(spec) => calibration::run(cfg, spec)?,
        ExperimentKind::SingletonIndexDemo(spec) => singleton::run(cfg, spec)?,
        ExperimentKind::ParmixConsistency(spec) => consistency::run(cfg, spec)?,
        ExperimentKind::KlChecklist(spec) => kl::run(cfg, spec)?,
    };
    results::sort_rows(&mut out.rows);
    results::check_unique(&out.rows)?;
    Ok(out)
}

/// Writes `<id>.results.csv`, `<id>.summary.json`, the plot files and any
/// chains into `dir`; returns the written paths in a fixed order.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let id = &out.experiment_id;
    let mut written = Vec::new();

    let path = dir.join(format!("{id}.results.csv"));
    write_rows(BufWriter::new(fs::File::create(&path)?), &out.rows)?;
    written.push(path);

    let path = dir.join(format!("{id}.summary.json"));
    let mut f = BufWriter::new(fs::File::create(&path)?);
    let mut summary = out.summary.clone();
    if let Some(obj) = summary.as_object_mut() {
        obj.insert("format_version".into(), RESULTS_FORMAT_VERSION.into());
        obj.insert("experiment_id".into(), id.clone().into());
    }
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f)?;
    f.flush()?;
    written.push(path);

    for plot in &out.plots {
        let path = dir.join(format!("{id}.{}.csv", plot.name));
        let mut f = BufWriter::new(fs::File::create(&path)?);
        writeln!(f, "# format_version={RESULTS_FORMAT_VERSION}")?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut f);
        w.write_record(&plot.header)?;
        for row in &plot.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        drop(w);
        f.flush()?;
        written.push(path);
    }
    for (stem, chain) in &out.chains {
        let (tsv, json) = crate::mcmc::write_chain(chain, dir, stem)?;
        written.push(tsv);
        written.push(json);
    }
    Ok(written)
}

/// Shortest round-trip decimal form used in plot files.
pub(crate) fn fmt_value(x: f64) -> String {
    format!("{x:?}")
}
