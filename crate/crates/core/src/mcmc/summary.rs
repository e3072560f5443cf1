use serde::{Deserialize, Serialize};

use super::McmcChain;
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighbourhoodMass {
    pub alpha0: f64,
    pub eps: f64,
    /// Fraction of states with `|α₁ − α₀| < ε`.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub n_states: usize,
    pub mean: f64,
    pub sd: f64,
    /// Batch-means Monte Carlo standard error of the mean.
    pub mcse_mean: f64,
    /// `(p, q_p)` pairs.
    pub quantiles: Vec<(f64, f64)>,
    pub neighbourhoods: Vec<NeighbourhoodMass>,
}

/// Posterior summary of the tail index `α₁` over the kept states.
pub fn posterior_tail_summary(chain: &McmcChain, probs: &[f64], neighbourhoods: &[(f64, f64)]) -> Result<TailSummary> {
    summarise(&chain.alpha1(), probs, neighbourhoods)
}

pub(crate) fn summarise(values: &[f64], probs: &[f64], neighbourhoods: &[(f64, f64)]) -> Result<TailSummary> {
    if values.is_empty() {
        return Err(domain("cannot summarise an empty chain"));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(domain(format!("quantile probability {p} outside [0, 1]")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(TailSummary {
        n_states: values.len(),
        mean,
        sd: var.sqrt(),
        mcse_mean: batch_means_mcse(values),
        quantiles: probs.iter().map(|&p| (p, quantile_type7(&sorted, p))).collect(),
        neighbourhoods: neighbourhoods
            .iter()
            .map(|&(alpha0, eps)| NeighbourhoodMass {
                alpha0,
                eps,
                mass: values.iter().filter(|&&a| (a - alpha0).abs() < eps).count() as f64 / n,
            })
            .collect(),
    })
}

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Batch-means standard error with `⌊√n⌋` batches.
pub fn batch_means_mcse(values: &[f64]) -> f64 {
    let n = values.len();
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        return (var / n as f64).sqrt();
    }
    let size = n / batches;
    let means: Vec<f64> =
        (0..batches).map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}
