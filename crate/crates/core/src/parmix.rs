//! The Pareto-mixture prior with an explicitly separated leading component.
//!
//! A draw has density
//! `f(x) = w₁ α₁ x^{−(α₁+1)} + (1 − w₁) ∫ α x^{−(α+1)} dH(α)` on `[1, ∞)`,
//! with `α₁ ∈ (0, ᾱ_n]`, `w₁ ∈ [w̲_n, 1]` and `H` supported on
//! `(α₁ + τ_n, α₁ + τ_n + ᾱ_n]`. Its tail index is therefore `α₁`, and the
//! remaining components decay at least `x^{−τ_n}` faster.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::dist::{check_support, ParetoAtom, ParetoMixture, TailIndex, WEIGHT_TOLERANCE};
use crate::error::{invalid, Error, Result};
use crate::estimators::{default_schedule, Schedule};
use crate::levy::{sample_nrm, LevySpec, Location};
use crate::quadrature;
use crate::seeds::{self, Stream};

/// Shape of a distribution on a bounded interval, rescaled to that interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportDist {
    #[default]
    Uniform,
    Beta {
        a: f64,
        b: f64,
    },
}

impl SupportDist {
    fn validate(&self) -> Result<()> {
        match *self {
            SupportDist::Uniform => Ok(()),
            SupportDist::Beta { a, b } if a > 0.0 && b > 0.0 => Ok(()),
            SupportDist::Beta { a, b } => Err(invalid(format!("beta shape parameters must be > 0, got ({a}, {b})"))),
        }
    }

    /// Draws from the interval `(lo, hi]`.
    pub fn sample<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> f64 {
        loop {
            let u = match *self {
                SupportDist::Uniform => 1.0 - rng.random::<f64>(),
                SupportDist::Beta { a, b } => rand_distr::Beta::new(a, b).expect("validated").sample(rng),
            };
            let x = lo + (hi - lo) * u;
            if x > lo && x <= hi {
                return x;
            }
        }
    }

    /// Log density on `[lo, hi]`; `−∞` outside.
    pub fn ln_density(&self, x: f64, lo: f64, hi: f64) -> f64 {
        if !(x >= lo && x <= hi) {
            return f64::NEG_INFINITY;
        }
        let width = hi - lo;
        match *self {
            SupportDist::Uniform => -width.ln(),
            SupportDist::Beta { a, b } => {
                let u = (x - lo) / width;
                (a - 1.0) * u.ln() + (b - 1.0) * (1.0 - u).ln() - ln_beta(a, b) - width.ln()
            }
        }
    }
}

/// Prior on the mixing measure `H` of the non-leading components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HPrior {
    /// Finite mixture: `1 + Poisson(λ)` components with symmetric
    /// `Dirichlet(dirichlet_a)` weights.
    Mfm {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_dirichlet_a")]
        dirichlet_a: f64,
    },
    Nrm {
        levy: LevySpec,
    },
}

fn default_lambda() -> f64 {
    3.0
}

fn default_dirichlet_a() -> f64 {
    1.0
}

impl Default for HPrior {
    fn default() -> Self {
        HPrior::Mfm { lambda: default_lambda(), dirichlet_a: default_dirichlet_a() }
    }
}

impl HPrior {
    /// Mean number of components of `H` under an MFM prior.
    pub fn mfm_mean_components(&self) -> Option<f64> {
        match *self {
            HPrior::Mfm { lambda, .. } => Some(1.0 + lambda),
            HPrior::Nrm { .. } => None,
        }
    }

    /// Symmetric Dirichlet parameter of the `K`-atom finite approximation.
    pub fn finite_dirichlet_param(&self, k: usize) -> f64 {
        match *self {
            HPrior::Mfm { dirichlet_a, .. } => dirichlet_a,
            HPrior::Nrm { levy } => levy.a() / k.max(1) as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            HPrior::Mfm { lambda, dirichlet_a } if lambda >= 0.0 && dirichlet_a > 0.0 => Ok(()),
            HPrior::Mfm { lambda, dirichlet_a } => {
                Err(invalid(format!("MFM needs lambda >= 0 and dirichlet_a > 0, got ({lambda}, {dirichlet_a})")))
            }
            HPrior::Nrm { .. } => Ok(()),
        }
    }
}

/// Full prior specification at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParmixHyper {
    pub schedule: Schedule,
    /// Prior of `α₁` on `(0, ᾱ_n]`.
    pub g1: SupportDist,
    /// Prior of `w₁` on `[w̲_n, 1]`.
    pub pi_w: SupportDist,
    pub h_prior: HPrior,
    /// Base distribution of `α − (α₁ + τ_n)` on `(0, ᾱ_n]`.
    pub h0: SupportDist,
}

impl ParmixHyper {
    pub fn new(
        schedule: Schedule,
        g1: SupportDist,
        pi_w: SupportDist,
        h_prior: HPrior,
        h0: SupportDist,
    ) -> Result<Self> {
        g1.validate()?;
        pi_w.validate()?;
        h0.validate()?;
        h_prior.validate()?;
        Ok(Self { schedule, g1, pi_w, h_prior, h0 })
    }

    /// Uniform `G₁`, `π_w`, `H₀` with an MFM(λ = 3) prior on `H`.
    pub fn default_for(n: u64) -> Result<Self> {
        Self::new(
            default_schedule(n)?,
            SupportDist::Uniform,
            SupportDist::Uniform,
            HPrior::default(),
            SupportDist::Uniform,
        )
    }

    pub fn with_h_prior(mut self, h_prior: HPrior) -> Result<Self> {
        h_prior.validate()?;
        self.h_prior = h_prior;
        Ok(self)
    }
}

/// JSON form of [`ParmixHyper`]; the schedule is rebuilt from `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParmixHyperConfig {
    pub n: u64,
    #[serde(default)]
    pub g1: SupportDist,
    #[serde(default)]
    pub pi_w: SupportDist,
    #[serde(default)]
    pub h_prior: HPrior,
    #[serde(default)]
    pub h0: SupportDist,
}

impl ParmixHyperConfig {
    pub fn build(&self) -> Result<ParmixHyper> {
        ParmixHyper::new(default_schedule(self.n)?, self.g1, self.pi_w, self.h_prior, self.h0)
    }
}

/// A truth in the completely-monotone, second-order Pareto class: a leading
/// Pareto term plus positive-weight atoms with exponents `≥ α(1+β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTruth", into = "RawTruth")]
pub struct TruthSpec {
    leading: ParetoAtom,
    remainder: Vec<ParetoAtom>,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawTruth {
    leading: ParetoAtom,
    #[serde(default)]
    remainder: Vec<ParetoAtom>,
    beta: f64,
}

impl TryFrom<RawTruth> for TruthSpec {
    type Error = Error;
    fn try_from(r: RawTruth) -> Result<Self> {
        TruthSpec::new(r.leading, r.remainder, r.beta)
    }
}

impl From<TruthSpec> for RawTruth {
    fn from(t: TruthSpec) -> Self {
        RawTruth { leading: t.leading, remainder: t.remainder, beta: t.beta }
    }
}

impl TruthSpec {
    pub fn new(leading: ParetoAtom, remainder: Vec<ParetoAtom>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!("exponent gap beta must be > 0, got {beta}")));
        }
        let floor = leading.exponent * (1.0 + beta);
        for atom in &remainder {
            if !(atom.weight > 0.0) {
                return Err(invalid(format!("remainder weights must be > 0, got {}", atom.weight)));
            }
            if atom.exponent < floor {
                return Err(invalid(format!(
                    "remainder exponent {} is below alpha(1 + beta) = {floor}",
                    atom.exponent
                )));
            }
        }
        // Validates weights and exponents.
        ParetoMixture::new(leading.weight, leading.exponent, remainder.clone())?;
        Ok(Self { leading, remainder, beta })
    }

    /// `F̄(x) = w x^{−α₁} + (1−w) x^{−α₂}`.
    pub fn two_component(w: f64, alpha: f64, alpha2: f64) -> Result<Self> {
        let beta = alpha2 / alpha - 1.0;
        Self::new(ParetoAtom::new(w, alpha), vec![ParetoAtom::new(1.0 - w, alpha2)], beta)
    }

    pub fn leading(&self) -> ParetoAtom {
        self.leading
    }

    pub fn remainder(&self) -> &[ParetoAtom] {
        &self.remainder
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn tail_index(&self) -> f64 {
        self.leading.exponent
    }

    pub fn to_mixture(&self) -> ParetoMixture {
        ParetoMixture::new(self.leading.weight, self.leading.exponent, self.remainder.clone())
            .expect("validated at construction")
    }
}

/// Draws one mixture from the prior.
///
/// `n_atoms` is the truncation level of an NRM prior on `H` and is ignored
/// for MFM priors, whose component count is drawn.
pub fn parmix_prior_sample(hyper: &ParmixHyper, n_atoms: usize, seed: u64) -> Result<ParetoMixture> {
    let mut rng = seeds::stream(seed);
    let sched = &hyper.schedule;
    let alpha1 = hyper.g1.sample(0.0, sched.alpha_bar, &mut rng);
    let w1 = hyper.pi_w.sample(sched.w_low, 1.0, &mut rng);
    let floor = alpha1 + sched.tau;
    let h0 = hyper.h0;
    let alpha_bar = sched.alpha_bar;
    let exponent_above = move |rng: &mut Stream| loop {
        let e = floor + h0.sample(0.0, alpha_bar, rng);
        // Open left endpoint; equality only arises from rounding.
        if e > floor {
            return e;
        }
    };
    let secondary: Vec<(f64, f64)> = match hyper.h_prior {
        HPrior::Mfm { lambda, dirichlet_a } => {
            let extra = if lambda > 0.0 {
                Poisson::new(lambda).map_err(|e| invalid(e.to_string()))?.sample(&mut rng) as usize
            } else {
                0
            };
            let count = 1 + extra;
            let weights = dirichlet(dirichlet_a, count, &mut rng)?;
            weights.into_iter().map(|v| (v, exponent_above(&mut rng))).collect()
        }
        HPrior::Nrm { levy } => {
            let measure =
                sample_nrm(&levy, |r| Location::Scalar(exponent_above(r)), n_atoms, seeds::child_seed(seed, 7))?;
            measure
                .atoms
                .iter()
                .map(|a| match a.location {
                    Location::Scalar(e) => (a.weight, e),
                    Location::Pair(..) => unreachable!("scalar base sampler"),
                })
                .collect()
        }
    };
    let atoms = secondary.into_iter().map(|(v, e)| ParetoAtom::new((1.0 - w1) * v, e)).collect();
    ParetoMixture::new(w1, alpha1, atoms)
}

/// Symmetric Dirichlet draw via normalised Gammas; falls back to uniform
/// weights if every Gamma draw underflows.
pub(crate) fn dirichlet<R: Rng + ?Sized>(a: f64, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    dirichlet_with(&vec![a; k], rng)
}

pub(crate) fn dirichlet_with<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut draws = params
        .iter()
        .map(|&p| Gamma::new(p, 1.0).map(|g| g.sample(rng)).map_err(|e| invalid(e.to_string())))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        let k = draws.len() as f64;
        draws.iter_mut().for_each(|d| *d = 1.0 / k);
    }
    Ok(draws)
}

/// `f(x) = Σ wᵢ αᵢ x^{−(αᵢ+1)}`.
pub fn density(mix: &ParetoMixture, x: f64) -> Result<f64> {
    check_support(x)?;
    let lx = x.ln();
    Ok(mix.components().map(|c| c.weight * c.exponent * (-(c.exponent + 1.0) * lx).exp()).sum())
}

/// `L_F(x) = F̄(x) x^{α₁}` with `α₁` the leading exponent.
pub fn slowly_varying_part(mix: &ParetoMixture, x: f64) -> Result<f64> {
    check_support(x)?;
    let lx = x.ln();
    let a1 = mix.leading_exponent();
    Ok(mix.components().map(|c| c.weight * ((a1 - c.exponent) * lx).exp()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    /// `h_F(x) = α₁ − x f(x) / F̄(x)`.
    pub h_value: f64,
    /// `B_n x^{−τ_n}`.
    pub bound: f64,
    pub holds: bool,
}

/// Compares `|h_F(x)|` with the envelope `B_n x^{−τ_n}`.
///
/// `h_F` is evaluated as the average of `α₁ − αᵢ` under weights
/// `wᵢ x^{−αᵢ} / Σ wⱼ x^{−αⱼ}`, which is the same quantity without the
/// cancellation of the quotient form at large `x`.
pub fn h_envelope(mix: &ParetoMixture, sched: &Schedule, x: f64) -> Result<EnvelopeCheck> {
    check_support(x)?;
    let h_value = h_function(mix, x);
    let bound = sched.envelope_b * x.powf(-sched.tau);
    Ok(EnvelopeCheck { h_value, bound, holds: h_value.abs() <= bound })
}

fn h_function(mix: &ParetoMixture, x: f64) -> f64 {
    let lx = x.ln();
    let a1 = mix.leading_exponent();
    let logs: Vec<(f64, f64)> = mix.components().map(|c| (c.weight.ln() - c.exponent * lx, a1 - c.exponent)).collect();
    let top = logs.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for &(lw, gap) in &logs {
        let w = (lw - top).exp();
        num += w * gap;
        den += w;
    }
    num / den
}

/// Target absolute accuracy of [`kl_divergence`].
pub const KL_TOLERANCE: f64 = 1e-10;

// Cap on the log-scale window; beyond it the tail bound is declared failed.
const KL_MAX_WINDOW: f64 = 1e6;

/// `KL(F₀, F) = ∫₁^∞ f₀ log(f₀ / f) dx`.
///
/// With `x = e^t` both densities become exponential mixtures
/// `g(t) = Σ wᵢ αᵢ e^{−αᵢ t}` and the integral is taken over `t ∈ [0, T]`
/// with adaptive Gauss–Kronrod. `T` is the first doubling of 8 at which the
/// analytic bound on the discarded tail falls below `KL_TOLERANCE / 10`;
/// failure to find one yields [`Error::Divergent`].
pub fn kl_divergence(truth: &TruthSpec, mix: &ParetoMixture) -> Result<f64> {
    kl_between(&truth.to_mixture(), mix)
}

/// [`kl_divergence`] for an arbitrary reference mixture.
pub fn kl_between(reference: &ParetoMixture, mix: &ParetoMixture) -> Result<f64> {
    let p = ExpMixture::from(reference);
    let q = ExpMixture::from(mix);
    let window = tail_window(&p, &q)?;
    let r = quadrature::integrate(
        |t| {
            let lp = p.ln_density(t);
            let lq = q.ln_density(t);
            if lp == f64::NEG_INFINITY {
                0.0
            } else {
                lp.exp() * (lp - lq)
            }
        },
        0.0,
        window,
        KL_TOLERANCE * 0.9,
        20_000,
    );
    if !r.value.is_finite() {
        return Err(Error::Divergent(format!("quadrature returned {}", r.value)));
    }
    Ok(r.value)
}

/// Exponential mixture `Σ cᵢ e^{−αᵢ t}` with `cᵢ = wᵢ αᵢ > 0`.
struct ExpMixture {
    terms: Vec<(f64, f64)>,
}

impl From<&ParetoMixture> for ExpMixture {
    fn from(m: &ParetoMixture) -> Self {
        ExpMixture {
            terms: m
                .components()
                .filter(|c| c.weight > 0.0)
                .map(|c| ((c.weight * c.exponent).ln(), c.exponent))
                .collect(),
        }
    }
}

impl ExpMixture {
    fn ln_density(&self, t: f64) -> f64 {
        let top = self.terms.iter().map(|&(lc, a)| lc - a * t).fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return top;
        }
        top + self.terms.iter().map(|&(lc, a)| (lc - a * t - top).exp()).sum::<f64>().ln()
    }

    fn min_rate(&self) -> f64 {
        self.terms.iter().map(|t| t.1).fold(f64::INFINITY, f64::min)
    }

    /// Sum of coefficients at the slowest rate, and of all coefficients.
    fn coefficient_bounds(&self) -> (f64, f64) {
        let a = self.min_rate();
        let lead = self.terms.iter().filter(|t| t.1 == a).map(|t| t.0.exp()).sum();
        let all = self.terms.iter().map(|t| t.0.exp()).sum();
        (lead, all)
    }
}

fn tail_window(p: &ExpMixture, q: &ExpMixture) -> Result<f64> {
    // For t ≥ 0: c_lead e^{−a t} ≤ g(t) ≤ C e^{−a t}, hence
    // |ln(p/q)| ≤ D + Δ t and the tail beyond T is at most
    // C_p e^{−a_p T} [(D + Δ T)/a_p + Δ/a_p²].
    let (ap, aq) = (p.min_rate(), q.min_rate());
    let (lead_p, all_p) = p.coefficient_bounds();
    let (lead_q, all_q) = q.coefficient_bounds();
    let d = (all_p.ln() - lead_q.ln()).abs().max((lead_p.ln() - all_q.ln()).abs());
    let delta = (aq - ap).abs();
    let bound = |t: f64| all_p * (-ap * t).exp() * ((d + delta * t) / ap + delta / (ap * ap));
    let mut window = 8.0;
    while window <= KL_MAX_WINDOW {
        let b = bound(window);
        if b.is_finite() && b < KL_TOLERANCE / 10.0 {
            return Ok(window);
        }
        window *= 2.0;
    }
    Err(Error::Divergent(format!("tail bound does not fall below {KL_TOLERANCE:e} before log x = {KL_MAX_WINDOW:e}")))
}

/// Smallest `n` in `grid` at which both prior ordering relations hold.
pub fn ordering_onset(grid: &[u64]) -> Option<u64> {
    grid.iter()
        .copied()
        .filter(|&n| n >= 3)
        .find(|&n| default_schedule(n).map(|s| s.ordering().prior_relations_hold()).unwrap_or(false))
}

/// Checks that a mixture respects the prior supports at `sched`.
pub fn conforms_to_schedule(mix: &ParetoMixture, sched: &Schedule) -> bool {
    let a1 = mix.leading_exponent();
    let floor = a1 + sched.tau;
    let total: f64 = mix.components().map(|c| c.weight).sum();
    a1 > 0.0
        && a1 <= sched.alpha_bar
        && mix.leading_weight() >= sched.w_low
        && (total - 1.0).abs() <= WEIGHT_TOLERANCE
        && mix.atoms().iter().all(|c| c.exponent > floor && c.exponent <= floor + sched.alpha_bar)
        && mix.tail_index() == TailIndex::Finite(a1)
}
