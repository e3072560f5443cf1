//! Posterior concentration of the tail index on a grid of sample sizes.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{fmt_value, ExperimentConfig, ExperimentOutput, PlotData, ResultRow};
use crate::error::{Error, Result};
use crate::estimators::{carpentier_kim, default_schedule, uniform_test};
use crate::mcmc::{posterior_tail_summary, run_chain, McmcChain, McmcConfig};
use crate::parallel::map_units;
use crate::parmix::{HPrior, ParmixHyper, SupportDist, TruthSpec};
use crate::seeds::{child_seed, unit_seed};

/// Sampler settings shared by every cell; the seed is derived per cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub n_iter: usize,
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
    pub k: usize,
    #[serde(default = "default_alpha1_scale")]
    pub alpha1_scale: f64,
    #[serde(default = "default_atom_scale")]
    pub atom_scale: f64,
}

fn one() -> usize {
    1
}

fn default_alpha1_scale() -> f64 {
    McmcConfig::default().alpha1_scale
}

fn default_atom_scale() -> f64 {
    McmcConfig::default().atom_scale
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            n_iter: 3000,
            burn_in: 1000,
            thin: 1,
            k: 5,
            alpha1_scale: default_alpha1_scale(),
            atom_scale: default_atom_scale(),
        }
    }
}

impl SamplerSettings {
    pub fn config(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            thin: self.thin,
            k: self.k,
            alpha1_scale: self.alpha1_scale,
            atom_scale: self.atom_scale,
            seed,
            adapt: true,
            record_allocations: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencySpec {
    pub truth: TruthSpec,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub h_prior: HPrior,
    #[serde(default)]
    pub g1: SupportDist,
    #[serde(default)]
    pub pi_w: SupportDist,
    #[serde(default)]
    pub h0: SupportDist,
    /// Radii of the tail-index neighbourhoods.
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_probs")]
    pub probs: Vec<f64>,
    /// `ε` of the uniform test on the raw data.
    #[serde(default = "default_test_eps")]
    pub test_eps: f64,
    #[serde(default)]
    pub write_chains: bool,
}

fn default_eps() -> Vec<f64> {
    vec![0.25, 0.5]
}

fn default_probs() -> Vec<f64> {
    vec![0.05, 0.5, 0.95]
}

fn default_test_eps() -> f64 {
    1.0
}

impl ConsistencySpec {
    pub(crate) fn validate(&self, sizes: &[u64]) -> Result<()> {
        self.sampler.config(0).validate()?;
        if sizes.iter().any(|&n| n < 3) {
            return Err(Error::Config("sample sizes must be >= 3".into()));
        }
        if self.eps.iter().any(|&e| !(e > 0.0)) || !(self.test_eps > 0.0) {
            return Err(Error::Config("neighbourhood radii and test_eps must be > 0".into()));
        }
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("quantile probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn hyper(&self, n: u64) -> Result<ParmixHyper> {
        ParmixHyper::new(default_schedule(n)?, self.g1, self.pi_w, self.h_prior, self.h0)
    }
}

pub(crate) fn mass_statistic(eps: f64) -> String {
    format!("mass[eps={eps}]")
}

pub(crate) fn quantile_statistic(p: f64) -> String {
    format!("quantile[p={p}]")
}

struct Cell {
    n: u64,
    replicate: u64,
    rows: Vec<ResultRow>,
    mean: Option<f64>,
    sd: Option<f64>,
    masses: Vec<Option<f64>>,
    reject: bool,
    chain: Option<McmcChain>,
}

fn run_cell(cfg: &ExperimentConfig, spec: &ConsistencySpec, n: u64, rep: u64) -> Result<Cell> {
    let id = cfg.experiment_id.as_str();
    let seed = unit_seed(cfg.seed_root, id, n, rep);
    let alpha0 = spec.truth.tail_index();
    let data = spec.truth.to_mixture().sample(n as usize, child_seed(seed, 1));
    let hyper = spec.hyper(n)?;
    let row = |name: &str, v: Option<f64>| ResultRow::new(id, n, rep, seed, name, v);
    let test = uniform_test(&data, alpha0, spec.test_eps, &hyper.schedule)?;
    let mut rows = vec![
        row("ck", carpentier_kim(&data, hyper.schedule.s)?.value()),
        row("test_reject", Some(f64::from(u8::from(test.reject)))),
    ];
    let radii: Vec<(f64, f64)> = spec.eps.iter().map(|&e| (alpha0, e)).collect();
    let chain = match run_chain(&data, &hyper, &spec.sampler.config(child_seed(seed, 2))) {
        Ok(c) => Some(c),
        Err(e @ Error::InitFailure { .. }) => {
            log::warn!("cell n = {n}, replicate = {rep}: {e}");
            None
        }
        Err(e) => return Err(e),
    };
    rows.push(row("init_failure", Some(if chain.is_some() { 0.0 } else { 1.0 })));
    let summary = chain.as_ref().map(|c| posterior_tail_summary(c, &spec.probs, &radii)).transpose()?;
    let get = |f: &dyn Fn(&crate::mcmc::TailSummary) -> f64| summary.as_ref().map(f);
    rows.push(row("posterior_mean", get(&|s| s.mean)));
    rows.push(row("posterior_sd", get(&|s| s.sd)));
    rows.push(row("mcse_mean", get(&|s| s.mcse_mean)));
    for (i, &p) in spec.probs.iter().enumerate() {
        rows.push(row(&quantile_statistic(p), get(&|s| s.quantiles[i].1)));
    }
    let masses: Vec<Option<f64>> = (0..spec.eps.len()).map(|i| get(&|s| s.neighbourhoods[i].mass)).collect();
    for (&e, &m) in spec.eps.iter().zip(&masses) {
        rows.push(row(&mass_statistic(e), m));
    }
    rows.push(row("accept_alpha1", chain.as_ref().map(|c| c.acceptance.alpha1)));
    rows.push(row("accept_offsets", chain.as_ref().and_then(|c| c.acceptance.offsets)));
    rows.push(row("w1_fallback", chain.as_ref().map(|c| c.acceptance.w1_fallback)));
    Ok(Cell {
        n,
        replicate: rep,
        rows,
        mean: get(&|s| s.mean),
        sd: get(&|s| s.sd),
        masses,
        reject: test.reject,
        chain: if spec.write_chains { chain } else { None },
    })
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

pub(super) fn run(cfg: &ExperimentConfig, spec: &ConsistencySpec) -> Result<ExperimentOutput> {
    let id = cfg.experiment_id.clone();
    let cells =
        map_units(&cfg.units(), |&(n, rep)| run_cell(cfg, spec, n, rep)).into_iter().collect::<Result<Vec<Cell>>>()?;

    let mut mass_plot = PlotData {
        name: "mass".into(),
        header: vec!["n".into(), "replicate".into(), "eps".into(), "mass".into()],
        rows: Vec::new(),
    };
    let mut sd_plot = PlotData {
        name: "sd".into(),
        header: vec!["n".into(), "replicate".into(), "posterior_sd".into()],
        rows: Vec::new(),
    };
    for c in &cells {
        for (&e, m) in spec.eps.iter().zip(&c.masses) {
            if let Some(m) = m {
                mass_plot.rows.push(vec![c.n.to_string(), c.replicate.to_string(), fmt_value(e), fmt_value(*m)]);
            }
        }
        if let Some(sd) = c.sd {
            sd_plot.rows.push(vec![c.n.to_string(), c.replicate.to_string(), fmt_value(sd)]);
        }
    }

    let per_n: Vec<_> = cfg
        .sample_sizes
        .iter()
        .map(|&n| {
            let here: Vec<&Cell> = cells.iter().filter(|c| c.n == n).collect();
            let masses: Vec<_> = spec
                .eps
                .iter()
                .enumerate()
                .map(|(i, &e)| json!({ "eps": e, "median_mass": median(here.iter().filter_map(|c| c.masses[i]).collect()) }))
                .collect();
            json!({
                "n": n,
                "replicates": here.len(),
                "init_failures": here.iter().filter(|c| c.mean.is_none()).count(),
                "median_posterior_mean": median(here.iter().filter_map(|c| c.mean).collect()),
                "median_posterior_sd": median(here.iter().filter_map(|c| c.sd).collect()),
                "neighbourhoods": masses,
                "test_reject_fraction": here.iter().filter(|c| c.reject).count() as f64 / here.len() as f64,
            })
        })
        .collect();
    let chains = cells
        .iter()
        .filter_map(|c| c.chain.clone().map(|ch| (format!("{id}.n{}.r{}", c.n, c.replicate), ch)))
        .collect();
    let rows = cells.into_iter().flat_map(|c| c.rows).collect();
    Ok(ExperimentOutput {
        experiment_id: id,
        rows,
        summary: json!({
            "kind": "PARMIX_CONSISTENCY",
            "alpha0": spec.truth.tail_index(),
            "per_n": per_n,
        }),
        plots: vec![mass_plot, sd_plot],
        chains,
    })
}
