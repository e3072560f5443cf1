//! Prior draws of location-scale Student-t mixtures and their estimated
//! tail indices, next to the index predicted by the moment-bound table.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ExperimentConfig, ExperimentOutput, ResultRow};
use crate::dist::{
    classify_base_measure, classify_mixture_tail, BaseMeasureCase, PriorKind, Provenance, TailClassification,
    TailDescriptor, TailIndex,
};
use crate::error::{Error, Result};
use crate::estimators::{carpentier_kim, default_schedule, hill};
use crate::levy::{sample_nrm, LevySpec, Location};
use crate::parallel::map_units;
use crate::parmix::dirichlet;
use crate::seeds::{self, unit_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SingletonPrior {
    Mfm {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_dirichlet_a")]
        dirichlet_a: f64,
    },
    Dp {
        #[serde(default = "default_mass")]
        mass: f64,
        #[serde(default = "default_atoms")]
        n_atoms: usize,
    },
}

fn default_lambda() -> f64 {
    3.0
}

fn default_dirichlet_a() -> f64 {
    1.0
}

fn default_mass() -> f64 {
    1.0
}

fn default_atoms() -> usize {
    100
}

/// Declared tail regime of a base-measure marginal, with a sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum BaseRegime {
    /// Pareto on `[1, ∞)`.
    Poly { alpha: f64 },
    /// `Ḡ(x) = (log x)^{−1/10}`.
    SuperHeavyLogLog,
    /// `Ḡ(x) = e / [log x (log log x)^δ]` beyond `e^e`.
    SubLogDelta { delta: f64 },
    /// `Ḡ(x) = 1 / log x` beyond `e`.
    SuperPoly,
    /// Standard normal location, Gamma scale.
    #[default]
    SubPoly,
}

impl BaseRegime {
    pub fn descriptor(&self) -> TailDescriptor {
        match *self {
            BaseRegime::Poly { alpha } => TailDescriptor::Poly(alpha),
            BaseRegime::SuperHeavyLogLog => TailDescriptor::SuperHeavyLogLog,
            BaseRegime::SubLogDelta { delta } => TailDescriptor::SubLogDelta(delta),
            BaseRegime::SuperPoly => TailDescriptor::SuperPoly,
            BaseRegime::SubPoly => TailDescriptor::SubPoly,
        }
    }

    /// Returns the draw and whether it was clamped to `f64::MAX`.
    fn sample(&self, rng: &mut Stream, thin: impl FnOnce(&mut Stream) -> f64) -> (f64, bool) {
        let u = 1.0 - rng.random::<f64>();
        let x = match *self {
            BaseRegime::Poly { alpha } => u.powf(-1.0 / alpha),
            BaseRegime::SuperHeavyLogLog => u.powi(-10).exp(),
            BaseRegime::SubLogDelta { delta } => invert_sub_log_delta(u.ln(), delta).exp().exp(),
            BaseRegime::SuperPoly => (1.0 / u).exp().max(std::f64::consts::E),
            BaseRegime::SubPoly => thin(rng),
        };
        if x.is_finite() {
            (x, false)
        } else {
            (f64::MAX, true)
        }
    }
}

/// Solves `1 − t − δ log t = log_u` for `t ≥ 1`.
fn invert_sub_log_delta(log_u: f64, delta: f64) -> f64 {
    let phi = |t: f64| 1.0 - t - delta * t.ln();
    let (mut lo, mut hi) = (1.0, 2.0);
    while phi(hi) > log_u {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > log_u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingletonSpec {
    pub prior: SingletonPrior,
    /// Degrees of freedom `a` of the Student-t kernel, its tail index.
    #[serde(default = "default_df")]
    pub kernel_df: f64,
    #[serde(default)]
    pub mu_base: BaseRegime,
    #[serde(default)]
    pub sigma_base: BaseRegime,
    /// Gamma shape and scale of a thin-tailed scale base.
    #[serde(default = "default_sigma_shape")]
    pub sigma_shape: f64,
    #[serde(default = "default_sigma_scale")]
    pub sigma_scale: f64,
    /// Band for the Carpentier–Kim estimates; defaults to `[a − 1, a + 1]`
    /// around a finite prediction.
    #[serde(default)]
    pub band: Option<(f64, f64)>,
    #[serde(default)]
    pub hill_k: Option<usize>,
}

fn default_df() -> f64 {
    3.0
}

fn default_sigma_shape() -> f64 {
    4.0
}

fn default_sigma_scale() -> f64 {
    0.5
}

impl SingletonSpec {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.kernel_df > 0.0 && self.kernel_df.is_finite()) {
            return Err(Error::Config("kernel_df must be a positive number".into()));
        }
        if !(self.sigma_shape > 0.0 && self.sigma_scale > 0.0) {
            return Err(Error::Config("sigma_shape and sigma_scale must be > 0".into()));
        }
        self.mu_base.descriptor().validate()?;
        self.sigma_base.descriptor().validate()?;
        match self.prior {
            SingletonPrior::Mfm { lambda, dirichlet_a } if !(lambda >= 0.0 && dirichlet_a > 0.0) => {
                Err(Error::Config("MFM needs lambda >= 0 and dirichlet_a > 0".into()))
            }
            SingletonPrior::Dp { mass, n_atoms } if !(mass > 0.0) || n_atoms == 0 => {
                Err(Error::Config("DP needs mass > 0 and n_atoms >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Tail index predicted for every draw, or `UnsupportedRegime` when a
    /// base regime is not covered.
    pub fn prediction(&self) -> Result<TailClassification> {
        let kernel = TailIndex::new(self.kernel_df)?;
        match self.prior {
            SingletonPrior::Mfm { .. } => {
                Ok(TailClassification { index: kernel, provenance: Provenance::AnalyticInf, table_case: None })
            }
            SingletonPrior::Dp { .. } => {
                let marginal = |b: &BaseRegime| match classify_base_measure(&b.descriptor(), PriorKind::Dp) {
                    BaseMeasureCase::Uncovered => {
                        Err(Error::UnsupportedRegime(format!("DP base regime {b:?} is not covered")))
                    }
                    case => Ok(case.marginal_tail().expect("covered case")),
                };
                classify_mixture_tail(marginal(&self.mu_base)?, marginal(&self.sigma_base)?, kernel)
            }
        }
    }
}

/// One prior draw: weights, `(μ, σ)` atoms and the number of clamped atoms.
struct Draw {
    weights: Vec<f64>,
    atoms: Vec<(f64, f64)>,
    overflow: usize,
}

fn draw_mixture(spec: &SingletonSpec, seed: u64) -> Result<Draw> {
    let mut overflow = 0;
    let (mu_base, sigma_base) = (spec.mu_base, spec.sigma_base);
    let sigma_gamma = Gamma::new(spec.sigma_shape, spec.sigma_scale).map_err(|e| Error::Config(e.to_string()))?;
    let mut location = |rng: &mut Stream| {
        let (mu, o1) = mu_base.sample(rng, |r| r.sample(StandardNormal));
        let (sigma, o2) = sigma_base.sample(rng, |r| sigma_gamma.sample(r));
        overflow += usize::from(o1) + usize::from(o2);
        (mu, sigma)
    };
    let mut rng = seeds::stream(seeds::child_seed(seed, 1));
    let (weights, atoms) = match spec.prior {
        SingletonPrior::Mfm { lambda, dirichlet_a } => {
            let extra = if lambda > 0.0 {
                Poisson::new(lambda).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng) as usize
            } else {
                0
            };
            let weights = dirichlet(dirichlet_a, 1 + extra, &mut rng)?;
            let atoms = (0..weights.len()).map(|_| location(&mut rng)).collect();
            (weights, atoms)
        }
        SingletonPrior::Dp { mass, n_atoms } => {
            let measure = sample_nrm(
                &LevySpec::dirichlet(mass)?,
                |r| {
                    let (mu, sigma) = location(r);
                    Location::Pair(mu, sigma)
                },
                n_atoms,
                seeds::child_seed(seed, 2),
            )?;
            let mut weights = Vec::with_capacity(measure.atoms.len());
            let mut atoms = Vec::with_capacity(measure.atoms.len());
            for a in &measure.atoms {
                let Location::Pair(mu, sigma) = a.location else { unreachable!("pair sampler") };
                weights.push(a.weight);
                atoms.push((mu, sigma));
            }
            (weights, atoms)
        }
    };
    Ok(Draw { weights, atoms, overflow })
}

/// Samples `n` points of the drawn mixture; returns the data and the
/// number of clamped points.
fn sample_data(draw: &Draw, df: f64, n: usize, seed: u64) -> Result<(Vec<f64>, usize)> {
    let mut rng = seeds::stream(seeds::child_seed(seed, 3));
    let t = StudentT::new(df).map_err(|e| Error::Config(e.to_string()))?;
    let mut cumulative = Vec::with_capacity(draw.weights.len());
    let mut acc = 0.0;
    for &w in &draw.weights {
        acc += w;
        cumulative.push(acc);
    }
    let mut clamped = 0;
    let data = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let c = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
            let (mu, sigma) = draw.atoms[c];
            let x = mu + sigma * t.sample(&mut rng);
            if x.is_finite() {
                x
            } else {
                clamped += 1;
                f64::MAX.copysign(x)
            }
        })
        .collect();
    Ok((data, clamped))
}

struct DrawResult {
    rows: Vec<ResultRow>,
    ck: Option<f64>,
}

pub(super) fn run(cfg: &ExperimentConfig, spec: &SingletonSpec) -> Result<ExperimentOutput> {
    let id = cfg.experiment_id.as_str();
    let prediction = match spec.prediction() {
        Ok(p) => Some(p),
        Err(Error::UnsupportedRegime(msg)) => {
            log::warn!("{msg}; rows are marked uncovered");
            None
        }
        Err(e) => return Err(e),
    };
    let predicted_value = prediction.map(|p| p.index.value());
    let units = cfg.units();
    let per_unit = map_units(&units, |&(n, rep)| -> Result<DrawResult> {
        let seed = unit_seed(cfg.seed_root, id, n, rep);
        let draw = draw_mixture(spec, seed)?;
        let (data, clamped) = sample_data(&draw, spec.kernel_df, n as usize, seed)?;
        let sched = default_schedule(n)?;
        let ck = carpentier_kim(&data, sched.s)?.value();
        let positive: Vec<f64> = data.iter().copied().filter(|&x| x > 0.0).collect();
        let k = spec.hill_k.unwrap_or((n as f64).sqrt() as usize).min(positive.len().saturating_sub(1));
        let h = if k >= 1 { hill(&positive, k).ok() } else { None };
        let row = |name: &str, v: Option<f64>| ResultRow::new(id, n, rep, seed, name, v);
        Ok(DrawResult {
            rows: vec![
                row("ck", ck),
                row("hill", h),
                row("components", Some(draw.weights.len() as f64)),
                row("overflow_atoms", Some(draw.overflow as f64)),
                row("overflow_samples", Some(clamped as f64)),
                row("predicted_index", predicted_value),
            ],
            ck,
        })
    });
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for r in per_unit {
        let mut r = r?;
        rows.append(&mut r.rows);
        estimates.push(r.ck);
    }

    let band = spec.band.or_else(|| match prediction.map(|p| p.index) {
        Some(TailIndex::Finite(a)) => Some((a - 1.0, a + 1.0)),
        _ => None,
    });
    let defined: Vec<f64> = estimates.iter().flatten().copied().collect();
    let stats = DrawStats::new(&defined);
    let in_band = band.map(|(lo, hi)| {
        estimates.iter().filter(|e| e.is_some_and(|v| v >= lo && v <= hi)).count() as f64 / estimates.len() as f64
    });
    let below_half = estimates.iter().filter(|e| e.is_some_and(|v| v < 0.5)).count() as f64 / estimates.len() as f64;
    let summary = json!({
        "kind": "SINGLETON_INDEX_DEMO",
        "prediction": prediction.map(|p| json!({
            "index": p.index.value(),
            "provenance": p.provenance,
            "table_row": p.table_case.map(|c| c.number()),
        })),
        "status": if prediction.is_some() { "COVERED" } else { "UNCOVERED" },
        "draws": estimates.len(),
        "ck_defined": defined.len(),
        "ck_mean": stats.mean,
        "ck_sd": stats.sd,
        "ck_min": stats.min,
        "ck_max": stats.max,
        "band": band,
        "fraction_in_band": in_band,
        "fraction_below_half": below_half,
    });
    Ok(ExperimentOutput { experiment_id: id.to_string(), rows, summary, plots: Vec::new(), chains: Vec::new() })
}

struct DrawStats {
    mean: Option<f64>,
    sd: Option<f64>,
    min: Option<f64>,
    max: Option<f64>,
}

impl DrawStats {
    fn new(v: &[f64]) -> Self {
        if v.is_empty() {
            return Self { mean: None, sd: None, min: None, max: None };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.len() > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self { mean: Some(mean), sd, min: v.iter().copied().reduce(f64::min), max: v.iter().copied().reduce(f64::max) }
    }
}
