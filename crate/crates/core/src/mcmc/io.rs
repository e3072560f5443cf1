//! Chain persistence: `<stem>.chain.tsv` holds one row per kept state,
//! `<stem>.chain.json` the configuration and diagnostics. Allocations are
//! not persisted.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AcceptanceRates, McmcChain, McmcConfig, McmcState};
use crate::dist::io::format_f64;
use crate::error::{Error, Result};
use crate::estimators::Schedule;

pub const CHAIN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSidecar {
    pub format_version: u32,
    pub config: McmcConfig,
    pub schedule: Schedule,
    pub seed: u64,
    pub n_data: usize,
    pub data_digest: String,
    pub acceptance: AcceptanceRates,
    pub final_scales: (f64, f64),
    pub n_states: usize,
}

fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.chain.tsv")), dir.join(format!("{stem}.chain.json")))
}

/// Writes the chain table and its sidecar; returns both paths.
pub fn write_chain(chain: &McmcChain, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let (tsv, json) = paths(dir, stem);
    let k = chain.config.k;
    let mut out = BufWriter::new(File::create(&tsv)?);
    let mut header = vec!["iteration".to_string(), "alpha1".into(), "w1".into()];
    header.extend((1..=k).map(|j| format!("exponent_{j}")));
    header.extend((1..=k).map(|j| format!("v_{j}")));
    writeln!(out, "{}", header.join("\t"))?;
    for s in &chain.states {
        let mut row = vec![s.iteration.to_string(), format_f64(s.alpha1), format_f64(s.w1)];
        row.extend(s.exponents.iter().map(|&e| format_f64(e)));
        row.extend(s.weights.iter().map(|&v| format_f64(v)));
        writeln!(out, "{}", row.join("\t"))?;
    }
    out.flush()?;

    let sidecar = ChainSidecar {
        format_version: CHAIN_FORMAT_VERSION,
        config: chain.config.clone(),
        schedule: chain.schedule,
        seed: chain.config.seed,
        n_data: chain.n_data,
        data_digest: chain.data_digest.clone(),
        acceptance: chain.acceptance,
        final_scales: chain.final_scales,
        n_states: chain.states.len(),
    };
    let mut f = BufWriter::new(File::create(&json)?);
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    writeln!(f)?;
    f.flush()?;
    Ok((tsv, json))
}

pub fn read_chain(dir: &Path, stem: &str) -> Result<McmcChain> {
    let (tsv, json) = paths(dir, stem);
    let sidecar: ChainSidecar = serde_json::from_reader(BufReader::new(File::open(&json)?))?;
    if sidecar.format_version != CHAIN_FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported chain format_version {}", sidecar.format_version)));
    }
    let k = sidecar.config.k;
    let mut states = Vec::with_capacity(sidecar.n_states);
    for (lineno, line) in BufReader::new(File::open(&tsv)?).lines().enumerate().skip(1) {
        let line = line?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 + 2 * k {
            return Err(Error::Parse(format!(
                "{}: line {}: expected {} columns",
                tsv.display(),
                lineno + 1,
                3 + 2 * k
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("{}: line {}: bad number {s:?}", tsv.display(), lineno + 1)))
        };
        let iteration = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("{}: line {}: bad iteration", tsv.display(), lineno + 1)))?;
        states.push(McmcState {
            iteration,
            alpha1: num(fields[1])?,
            w1: num(fields[2])?,
            exponents: fields[3..3 + k].iter().map(|s| num(s)).collect::<Result<_>>()?,
            weights: fields[3 + k..].iter().map(|s| num(s)).collect::<Result<_>>()?,
            allocations: None,
        });
    }
    if states.len() != sidecar.n_states {
        return Err(Error::Parse(format!("sidecar lists {} states, table has {}", sidecar.n_states, states.len())));
    }
    Ok(McmcChain {
        config: sidecar.config,
        schedule: sidecar.schedule,
        n_data: sidecar.n_data,
        data_digest: sidecar.data_digest,
        acceptance: sidecar.acceptance,
        final_scales: sidecar.final_scales,
        states,
    })
}
