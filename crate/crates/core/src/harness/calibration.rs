use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ExperimentConfig, ExperimentOutput, ResultRow};
use crate::dist::ParetoMixture;
use crate::error::{Error, Result};
use crate::estimators::{carpentier_kim, default_schedule, hill, uniform_test};
use crate::parallel::map_units;
use crate::seeds::unit_seed;

/// Estimator calibration on pure Pareto samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSpec {
    /// True tail indices; one pure Pareto truth per value.
    pub alphas: Vec<f64>,
    /// Half-width of the acceptance band around the truth.
    #[serde(default = "default_band")]
    pub band: f64,
    /// `ε` of the uniform test.
    #[serde(default = "default_test_eps")]
    pub test_eps: f64,
    /// Hill order; defaults to `⌊√n⌋`.
    #[serde(default)]
    pub hill_k: Option<usize>,
}

fn default_band() -> f64 {
    0.3
}

fn default_test_eps() -> f64 {
    1.0
}

impl CalibrationSpec {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Config("alphas must be a nonempty list of positive numbers".into()));
        }
        if !(self.band > 0.0) || !(self.test_eps > 0.0) {
            return Err(Error::Config("band and test_eps must be > 0".into()));
        }
        Ok(())
    }
}

pub(crate) fn statistic(name: &str, alpha: f64) -> String {
    format!("{name}[alpha={alpha}]")
}

pub(super) fn run(cfg: &ExperimentConfig, spec: &CalibrationSpec) -> Result<ExperimentOutput> {
    let id = cfg.experiment_id.as_str();
    let units: Vec<(f64, u64, u64)> =
        spec.alphas.iter().flat_map(|&a| cfg.units().into_iter().map(move |(n, r)| (a, n, r))).collect();
    let per_unit = map_units(&units, |&(alpha, n, rep)| -> Result<(Vec<ResultRow>, Option<f64>)> {
        let seed = unit_seed(cfg.seed_root, &format!("{id}:alpha={alpha}"), n, rep);
        let data = ParetoMixture::pure(alpha)?.sample(n as usize, seed);
        let sched = default_schedule(n)?;
        let ck = carpentier_kim(&data, sched.s)?.value();
        let k = spec.hill_k.unwrap_or((n as f64).sqrt() as usize);
        let h = hill(&data, k).ok();
        let test = uniform_test(&data, alpha, spec.test_eps, &sched)?;
        let row = |name: &str, v: Option<f64>| ResultRow::new(id, n, rep, seed, statistic(name, alpha), v);
        Ok((
            vec![
                row("ck", ck),
                row("hill", h),
                row("reject", Some(f64::from(u8::from(test.reject)))),
                row("count_s", Some(test.count_s as f64)),
                row("count_s1", Some(test.count_s1 as f64)),
            ],
            ck,
        ))
    });
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for r in per_unit {
        let (mut unit_rows, ck) = r?;
        rows.append(&mut unit_rows);
        estimates.push(ck);
    }

    let mut cells = Vec::new();
    for &alpha in &spec.alphas {
        for &n in &cfg.sample_sizes {
            let vals: Vec<Option<f64>> =
                units.iter().zip(&estimates).filter(|((a, m, _), _)| *a == alpha && *m == n).map(|(_, e)| *e).collect();
            let defined: Vec<f64> = vals.iter().flatten().copied().collect();
            let within = defined.iter().filter(|v| (*v - alpha).abs() <= spec.band).count();
            let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
            cells.push(json!({
                "alpha": alpha,
                "n": n,
                "replicates": vals.len(),
                "defined": defined.len(),
                "within_band": within,
                "mean_estimate": mean,
            }));
        }
    }
    Ok(ExperimentOutput {
        experiment_id: id.to_string(),
        rows,
        summary: json!({ "kind": "ESTIMATOR_CALIBRATION", "band": spec.band, "cells": cells }),
        plots: Vec::new(),
        chains: Vec::new(),
    })
}
