//! KL divergences along the approximating family used to show that a
//! second-order Pareto truth lies in the KL support of the prior: first the
//! truth's remainder truncated to exponents `≤ a`, then box perturbations of
//! `(w₁, α₁)` with that truncated remainder held fixed.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ExperimentConfig, ExperimentOutput, ResultRow};
use crate::dist::{ParetoAtom, ParetoMixture};
use crate::error::{Error, Result};
use crate::estimators::default_schedule;
use crate::parmix::{kl_divergence, TruthSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KlSpec {
    pub truth: TruthSpec,
    /// Sample size whose schedule bounds the truncation points.
    #[serde(default = "default_schedule_n")]
    pub schedule_n: u64,
    #[serde(default = "default_truncations")]
    pub truncations: Vec<f64>,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
}

fn default_schedule_n() -> u64 {
    100_000
}

fn default_truncations() -> Vec<f64> {
    vec![5.0, 10.0, 20.0, 40.0]
}

fn default_radii() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}

impl KlSpec {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.schedule_n < 3 {
            return Err(Error::Config("schedule_n must be >= 3".into()));
        }
        if self.truncations.is_empty() || self.truncations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("truncations must be nonempty and strictly increasing".into()));
        }
        if self.radii.is_empty()
            || self.radii.iter().any(|&r| !(r > 0.0))
            || self.radii.windows(2).any(|w| w[0] <= w[1])
        {
            return Err(Error::Config("radii must be positive and strictly decreasing".into()));
        }
        Ok(())
    }
}

/// `G₀` restricted to exponents `≤ a` and rescaled to mass `1 − w₀`.
pub fn truncated_remainder(truth: &TruthSpec, a: f64) -> Option<Vec<ParetoAtom>> {
    let kept: Vec<ParetoAtom> = truth.remainder().iter().copied().filter(|c| c.exponent <= a).collect();
    let target = 1.0 - truth.leading().weight;
    if kept.is_empty() {
        return (target == 0.0).then(Vec::new);
    }
    let mass: f64 = kept.iter().map(|c| c.weight).sum();
    Some(kept.into_iter().map(|c| ParetoAtom::new(c.weight / mass * target, c.exponent)).collect())
}

/// `f_{w,α,G}` with `G` given as atoms of total mass `1 − w₀`, rescaled to
/// mass `1 − w`.
fn with_leading(w: f64, alpha: f64, remainder: &[ParetoAtom]) -> Result<ParetoMixture> {
    let mass: f64 = remainder.iter().map(|c| c.weight).sum();
    let atoms = if mass > 0.0 {
        remainder.iter().map(|c| ParetoAtom::new(c.weight / mass * (1.0 - w), c.exponent)).collect()
    } else {
        Vec::new()
    };
    ParetoMixture::new(w, alpha, atoms)
}

/// Strictly decreasing over the defined values, requiring all to be defined.
fn strictly_decreasing(v: &[Option<f64>]) -> bool {
    v.iter().all(Option::is_some) && v.windows(2).all(|w| w[1].unwrap() < w[0].unwrap())
}

pub(super) fn run(cfg: &ExperimentConfig, spec: &KlSpec) -> Result<ExperimentOutput> {
    let id = cfg.experiment_id.as_str();
    let (n, seed) = (spec.schedule_n, cfg.seed_root);
    let sched = default_schedule(n)?;
    let truth = &spec.truth;
    let (w0, a0) = (truth.leading().weight, truth.leading().exponent);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut record = |name: String, v: Result<f64>, rows: &mut Vec<ResultRow>| -> Option<f64> {
        let v = match v {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("{name}: {e}");
                failures.push(json!({ "statistic": name, "error": e.to_string() }));
                None
            }
        };
        rows.push(ResultRow::new(id, n, 0, seed, name, v));
        v
    };

    let identity = record("kl_identity".into(), kl_divergence(truth, &truth.to_mixture()), &mut rows);

    let mut truncation = Vec::new();
    for &a in &spec.truncations {
        let value = match truncated_remainder(truth, a) {
            Some(rem) => with_leading(w0, a0, &rem).and_then(|m| kl_divergence(truth, &m)),
            None => Err(Error::Domain(format!("no remainder atoms at or below a = {a}"))),
        };
        truncation.push(record(format!("kl_truncation[a={a}]"), value, &mut rows));
        let inside = a <= sched.alpha_bar + sched.tau;
        rows.push(ResultRow::new(id, n, 0, seed, format!("in_support[a={a}]"), Some(f64::from(u8::from(inside)))));
    }

    let fixed = truncated_remainder(truth, *spec.truncations.last().expect("validated"));
    let mut boxes = Vec::new();
    for &eta in &spec.radii {
        let value = match &fixed {
            None => Err(Error::Domain("truncated remainder is empty".into())),
            Some(rem) => {
                let mut worst = f64::NEG_INFINITY;
                let mut result = Ok(());
                for w in [w0 - eta, (w0 + eta).min(1.0)] {
                    for a in [a0 - eta, a0 + eta] {
                        if !(w > 0.0 && a > 0.0) {
                            continue;
                        }
                        match with_leading(w, a, rem).and_then(|m| kl_divergence(truth, &m)) {
                            Ok(k) => worst = worst.max(k),
                            Err(e) => result = Err(e),
                        }
                    }
                }
                result.map(|_| worst)
            }
        };
        boxes.push(record(format!("kl_box[eta={eta}]"), value, &mut rows));
    }

    let summary = json!({
        "kind": "KL_CHECKLIST",
        "schedule_n": n,
        "support_upper": sched.alpha_bar + sched.tau,
        "kl_identity": identity,
        "identity_below_1e-9": identity.is_some_and(|v| v.abs() < 1e-9),
        "truncation": spec.truncations.iter().zip(&truncation).map(|(a, v)| json!({"a": a, "kl": v})).collect::<Vec<_>>(),
        "truncation_strictly_decreasing": strictly_decreasing(&truncation),
        "box": spec.radii.iter().zip(&boxes).map(|(e, v)| json!({"eta": e, "max_kl": v})).collect::<Vec<_>>(),
        "box_strictly_decreasing": strictly_decreasing(&boxes),
        "failures": failures,
    });
    Ok(ExperimentOutput { experiment_id: id.to_string(), rows, summary, plots: Vec::new(), chains: Vec::new() })
}
