//! Metropolis-within-Gibbs posterior sampler for the Pareto-mixture prior.
//!
//! `H` is truncated to `K` secondary atoms. Each secondary exponent is
//! stored as an offset `dⱼ ∈ (0, ᾱ_n]` above `α₁ + τ_n`, so a move of `α₁`
//! shifts every secondary exponent with it and never leaves the support.
//! One sweep updates, in order: allocations, `α₁`, the weights, and each
//! offset.

mod io;
mod summary;

pub use io::{read_chain, write_chain, ChainSidecar, CHAIN_FORMAT_VERSION};
pub use summary::{batch_means_mcse, posterior_tail_summary, quantile_type7, NeighbourhoodMass, TailSummary};

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dist::{ParetoAtom, ParetoMixture, WEIGHT_TOLERANCE};
use crate::error::{domain, invalid, Error, Result};
use crate::estimators::Schedule;
use crate::parmix::{dirichlet_with, ParmixHyper, SupportDist};
use crate::seeds::{self, Stream};

const INIT_ATTEMPTS: usize = 100;
const W1_REJECTIONS: usize = 100;
const ADAPT_WINDOW: usize = 50;
const TARGET_ACCEPT: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
    /// Number of secondary atoms; 0 gives the pure-Pareto model.
    pub k: usize,
    /// Initial scale of the log-scale random walk on `α₁`.
    #[serde(default = "default_alpha1_scale")]
    pub alpha1_scale: f64,
    /// Initial scale of the log-scale random walk on the offsets.
    #[serde(default = "default_atom_scale")]
    pub atom_scale: f64,
    #[serde(default)]
    pub seed: u64,
    /// Tune the proposal scales during burn-in.
    #[serde(default = "yes")]
    pub adapt: bool,
    #[serde(default)]
    pub record_allocations: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_alpha1_scale() -> f64 {
    0.05
}

fn default_atom_scale() -> f64 {
    0.5
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 2000,
            burn_in: 500,
            thin: 1,
            k: 5,
            alpha1_scale: default_alpha1_scale(),
            atom_scale: default_atom_scale(),
            seed: 0,
            adapt: true,
            record_allocations: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(invalid(format!("burn_in ({}) must be < n_iter ({})", self.burn_in, self.n_iter)));
        }
        if self.thin == 0 {
            return Err(invalid("thin must be >= 1"));
        }
        for (name, v) in [("alpha1_scale", self.alpha1_scale), ("atom_scale", self.atom_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// One kept state. `weights[j]` is the absolute weight `vⱼ`, so
/// `w₁ + Σ vⱼ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcState {
    pub iteration: usize,
    pub alpha1: f64,
    pub w1: f64,
    pub exponents: Vec<f64>,
    pub weights: Vec<f64>,
    /// `zᵢ ∈ {0, …, K}`, 0 being the leading component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocations: Option<Vec<u32>>,
}

impl McmcState {
    pub fn to_mixture(&self) -> Result<ParetoMixture> {
        let atoms = self.weights.iter().zip(&self.exponents).map(|(&w, &e)| ParetoAtom::new(w, e)).collect();
        ParetoMixture::new(self.w1, self.alpha1, atoms)
    }

    /// Checks the prior support constraints exactly.
    pub fn validate(&self, sched: &Schedule) -> Result<()> {
        let bad = |msg: String| Err(domain(format!("state at iteration {}: {msg}", self.iteration)));
        if !(self.alpha1 > 0.0 && self.alpha1 <= sched.alpha_bar) {
            return bad(format!("alpha1 = {} outside (0, {}]", self.alpha1, sched.alpha_bar));
        }
        if !(self.w1 >= sched.w_low && self.w1 <= 1.0) {
            return bad(format!("w1 = {} outside [{}, 1]", self.w1, sched.w_low));
        }
        if self.exponents.len() != self.weights.len() {
            return bad("exponent and weight counts differ".into());
        }
        let floor = self.alpha1 + sched.tau;
        for &e in &self.exponents {
            if !(e > floor && e <= floor + sched.alpha_bar) {
                return bad(format!("secondary exponent {e} outside ({floor}, {}]", floor + sched.alpha_bar));
            }
        }
        if self.weights.iter().any(|&v| !(v >= 0.0)) {
            return bad("negative secondary weight".into());
        }
        let total = self.w1 + self.weights.iter().sum::<f64>();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return bad(format!("weights sum to {total}"));
        }
        Ok(())
    }
}

/// Acceptance rates over the kept (post burn-in) iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub alpha1: f64,
    /// Pooled over all secondary offsets; absent when `K = 0`.
    pub offsets: Option<f64>,
    /// Fraction of `w₁` updates that needed the MH fallback.
    pub w1_fallback: f64,
    /// Acceptance of the fallback moves, if any occurred.
    pub w1_fallback_accept: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcChain {
    pub config: McmcConfig,
    pub schedule: Schedule,
    pub n_data: usize,
    /// Hex SHA-256 of the data as little-endian `f64` bytes.
    pub data_digest: String,
    pub acceptance: AcceptanceRates,
    /// Proposal scales `(α₁, offsets)` after burn-in.
    pub final_scales: (f64, f64),
    pub states: Vec<McmcState>,
}

impl McmcChain {
    pub fn alpha1(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.alpha1).collect()
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }
}

pub fn data_digest(data: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for x in data {
        hasher.update(x.to_le_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Validates every state of a chain against its schedule.
pub fn validate_chain(chain: &McmcChain) -> Result<()> {
    chain.states.iter().try_for_each(|s| s.validate(&chain.schedule))
}

/// Internal sampler state.
struct Sampler<'a> {
    sched: Schedule,
    hyper: &'a ParmixHyper,
    log_x: Vec<f64>,
    k: usize,
    dir_param: f64,
    alpha1: f64,
    w1: f64,
    /// Secondary proportions, summing to 1.
    u: Vec<f64>,
    offsets: Vec<f64>,
    z: Vec<u32>,
    counts: Vec<usize>,
    log_sums: Vec<f64>,
    alpha1_scale: f64,
    atom_scale: f64,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    proposed: usize,
    accepted: usize,
}

impl Tally {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += usize::from(accepted);
    }

    fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

impl<'a> Sampler<'a> {
    fn exponent(&self, j: usize) -> f64 {
        self.alpha1 + self.sched.tau + self.offsets[j]
    }

    fn exponent_ok(&self, alpha1: f64, offset: f64) -> bool {
        let floor = alpha1 + self.sched.tau;
        let e = floor + offset;
        e > floor && e <= floor + self.sched.alpha_bar
    }

    /// `(ln weight, exponent)` of each component, leading first.
    fn components(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.k + 1);
        out.push((self.w1.ln(), self.alpha1));
        for j in 0..self.k {
            out.push((((1.0 - self.w1) * self.u[j]).ln(), self.exponent(j)));
        }
        out
    }

    /// Observed-data log-likelihood without the `−Σ log xᵢ` constant.
    fn log_likelihood(&self) -> f64 {
        let comps = self.components();
        let consts: Vec<(f64, f64)> = comps.iter().map(|&(lw, a)| (lw + a.ln(), a)).collect();
        self.log_x
            .iter()
            .map(|&lx| {
                let top = consts.iter().map(|&(c, a)| c - a * lx).fold(f64::NEG_INFINITY, f64::max);
                if top == f64::NEG_INFINITY || top.is_nan() {
                    return f64::NEG_INFINITY;
                }
                top + consts.iter().map(|&(c, a)| (c - a * lx - top).exp()).sum::<f64>().ln()
            })
            .sum()
    }

    fn update_allocations(&mut self, rng: &mut Stream) {
        let consts: Vec<(f64, f64)> = self.components().iter().map(|&(lw, a)| (lw + a.ln(), a)).collect();
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.log_sums.iter_mut().for_each(|s| *s = 0.0);
        let mut probs = vec![0.0; consts.len()];
        for (i, &lx) in self.log_x.iter().enumerate() {
            let mut top = f64::NEG_INFINITY;
            for (p, &(c, a)) in probs.iter_mut().zip(&consts) {
                *p = c - a * lx;
                top = top.max(*p);
            }
            let mut total = 0.0;
            for p in probs.iter_mut() {
                *p = (*p - top).exp();
                total += *p;
            }
            let mut target = rng.random::<f64>() * total;
            let mut pick = probs.len() - 1;
            for (c, &p) in probs.iter().enumerate() {
                if target < p {
                    pick = c;
                    break;
                }
                target -= p;
            }
            // Never land on a zero-weight component through rounding.
            while probs[pick] == 0.0 && pick > 0 {
                pick -= 1;
            }
            self.z[i] = pick as u32;
            self.counts[pick] += 1;
            self.log_sums[pick] += lx;
        }
    }

    /// Complete-data log target of the exponents, up to a constant.
    fn exponent_target(&self, alpha1: f64) -> f64 {
        let mut t = self.hyper.g1.ln_density(alpha1, 0.0, self.sched.alpha_bar);
        t += self.counts[0] as f64 * alpha1.ln() - alpha1 * self.log_sums[0];
        for j in 0..self.k {
            let a = alpha1 + self.sched.tau + self.offsets[j];
            t += self.counts[j + 1] as f64 * a.ln() - a * self.log_sums[j + 1];
        }
        t
    }

    fn update_alpha1(&mut self, rng: &mut Stream) -> bool {
        let step: f64 = rng.sample(StandardNormal);
        let proposal = self.alpha1 * (self.alpha1_scale * step).exp();
        let u: f64 = rng.random();
        if !(proposal > 0.0 && proposal <= self.sched.alpha_bar) {
            return false;
        }
        if !(0..self.k).all(|j| self.exponent_ok(proposal, self.offsets[j])) {
            return false;
        }
        let log_ratio =
            self.exponent_target(proposal) - self.exponent_target(self.alpha1) + proposal.ln() - self.alpha1.ln();
        if u.ln() < log_ratio {
            self.alpha1 = proposal;
            true
        } else {
            false
        }
    }

    /// Returns `Some(accepted)` when the MH fallback was used.
    fn update_weights(&mut self, rng: &mut Stream) -> Result<Option<bool>> {
        if self.k == 0 {
            return Ok(None);
        }
        let n0 = self.counts[0] as f64;
        let m = self.counts[1..].iter().sum::<usize>() as f64;
        let (pa, pb) = match self.hyper.pi_w {
            SupportDist::Uniform => (1.0, 1.0),
            SupportDist::Beta { a, b } => (a, b),
        };
        let (shape_a, shape_b) = (n0 + pa, m + pb);
        let beta = Beta::new(shape_a, shape_b).map_err(|e| invalid(e.to_string()))?;
        let lo = self.sched.w_low;
        let mut fallback = None;
        let mut drawn = None;
        for _ in 0..W1_REJECTIONS {
            let w: f64 = beta.sample(rng);
            if (lo..=1.0).contains(&w) {
                drawn = Some(w);
                break;
            }
        }
        match drawn {
            Some(w) => self.w1 = w,
            None => {
                // Random walk scaled by the untruncated conditional's sd.
                let total = shape_a + shape_b;
                let sd = (shape_a * shape_b / (total * total * (total + 1.0))).sqrt();
                let step: f64 = rng.sample(StandardNormal);
                let proposal = self.w1 + sd * step;
                if !(lo..=1.0).contains(&proposal) {
                    self.u = dirichlet_with(&self.secondary_params(), rng)?;
                    return Ok(Some(false));
                }
                let ln_target = |w: f64| (shape_a - 1.0) * w.ln() + (shape_b - 1.0) * (1.0 - w).ln();
                let log_ratio = ln_target(proposal) - ln_target(self.w1);
                let accept = rng.random::<f64>().ln() < log_ratio;
                if accept {
                    self.w1 = proposal;
                }
                fallback = Some(accept);
            }
        }
        self.u = dirichlet_with(&self.secondary_params(), rng)?;
        Ok(fallback)
    }

    fn secondary_params(&self) -> Vec<f64> {
        self.counts[1..].iter().map(|&c| self.dir_param + c as f64).collect()
    }

    fn update_offsets(&mut self, rng: &mut Stream, tally: &mut Tally) {
        let ab = self.sched.alpha_bar;
        for j in 0..self.k {
            let step: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.random();
            let d = self.offsets[j];
            let proposal = d * (self.atom_scale * step).exp();
            if !(proposal > 0.0 && proposal <= ab && self.exponent_ok(self.alpha1, proposal)) {
                tally.record(false);
                continue;
            }
            let (c, s) = (self.counts[j + 1] as f64, self.log_sums[j + 1]);
            let floor = self.alpha1 + self.sched.tau;
            let target = |off: f64| {
                let a = floor + off;
                c * a.ln() - a * s + self.hyper.h0.ln_density(off, 0.0, ab)
            };
            let log_ratio = target(proposal) - target(d) + proposal.ln() - d.ln();
            let accept = u.ln() < log_ratio;
            if accept {
                self.offsets[j] = proposal;
            }
            tally.record(accept);
        }
    }

    fn snapshot(&self, iteration: usize, record_allocations: bool) -> McmcState {
        McmcState {
            iteration,
            alpha1: self.alpha1,
            w1: self.w1,
            exponents: (0..self.k).map(|j| self.exponent(j)).collect(),
            weights: self.u.iter().map(|&u| (1.0 - self.w1) * u).collect(),
            allocations: record_allocations.then(|| self.z.clone()),
        }
    }
}

fn adapt(scale: &mut f64, window: &mut Tally) {
    if let Some(rate) = window.rate() {
        *scale *= (rate - TARGET_ACCEPT).exp();
        *scale = scale.clamp(1e-6, 50.0);
    }
    *window = Tally::default();
}

/// Runs one chain. An empty `data` slice samples the prior.
pub fn run_chain(data: &[f64], hyper: &ParmixHyper, cfg: &McmcConfig) -> Result<McmcChain> {
    cfg.validate()?;
    if let Some(bad) = data.iter().find(|&&x| !(x >= 1.0)) {
        return Err(domain(format!("data must lie in [1, inf), found {bad}")));
    }
    let sched = hyper.schedule;
    let mut rng = seeds::stream(cfg.seed);
    let k = cfg.k;
    let log_x: Vec<f64> = data.iter().map(|x| x.ln()).collect();
    let mut sampler = Sampler {
        sched,
        hyper,
        k,
        dir_param: hyper.h_prior.finite_dirichlet_param(k),
        alpha1: 0.0,
        w1: if k == 0 { 1.0 } else { 0.5 * (sched.w_low + 1.0) },
        u: vec![1.0 / k.max(1) as f64; k],
        offsets: (0..k).map(|j| sched.alpha_bar * (j + 1) as f64 / (k + 1) as f64).collect(),
        z: vec![0; data.len()],
        counts: vec![0; k + 1],
        log_sums: vec![0.0; k + 1],
        log_x,
        alpha1_scale: cfg.alpha1_scale,
        atom_scale: cfg.atom_scale,
    };
    initialise(&mut sampler)?;

    let mut alpha_tally = Tally::default();
    let mut offset_tally = Tally::default();
    let mut alpha_window = Tally::default();
    let mut offset_window = Tally::default();
    let (mut fallbacks, mut fallback_accepts, mut weight_updates) = (0usize, 0usize, 0usize);
    let mut states = Vec::with_capacity((cfg.n_iter - cfg.burn_in) / cfg.thin + 1);

    for iter in 0..cfg.n_iter {
        let kept_phase = iter >= cfg.burn_in;
        sampler.update_allocations(&mut rng);
        let acc = sampler.update_alpha1(&mut rng);
        alpha_window.record(acc);
        let fb = sampler.update_weights(&mut rng)?;
        let mut step_offsets = Tally::default();
        sampler.update_offsets(&mut rng, &mut step_offsets);
        offset_window.proposed += step_offsets.proposed;
        offset_window.accepted += step_offsets.accepted;

        if kept_phase {
            alpha_tally.record(acc);
            offset_tally.proposed += step_offsets.proposed;
            offset_tally.accepted += step_offsets.accepted;
            if k > 0 {
                weight_updates += 1;
            }
            if let Some(a) = fb {
                fallbacks += 1;
                fallback_accepts += usize::from(a);
            }
            if (iter - cfg.burn_in).is_multiple_of(cfg.thin) {
                let state = sampler.snapshot(iter, cfg.record_allocations);
                if let Err(e) = state.validate(&sched) {
                    panic!("sampler produced a state outside the prior support: {e}");
                }
                states.push(state);
            }
        } else if cfg.adapt && (iter + 1) % ADAPT_WINDOW == 0 {
            adapt(&mut sampler.alpha1_scale, &mut alpha_window);
            adapt(&mut sampler.atom_scale, &mut offset_window);
        }
    }

    let acceptance = AcceptanceRates {
        alpha1: alpha_tally.rate().unwrap_or(0.0),
        offsets: offset_tally.rate(),
        w1_fallback: if weight_updates == 0 { 0.0 } else { fallbacks as f64 / weight_updates as f64 },
        w1_fallback_accept: (fallbacks > 0).then(|| fallback_accepts as f64 / fallbacks as f64),
    };
    Ok(McmcChain {
        config: cfg.clone(),
        schedule: sched,
        n_data: data.len(),
        data_digest: data_digest(data),
        acceptance,
        final_scales: (sampler.alpha1_scale, sampler.atom_scale),
        states,
    })
}

/// Finds a starting `α₁` with finite likelihood: first a clamped moment
/// guess, then a grid spread over `(0, ᾱ_n]`.
fn initialise(s: &mut Sampler<'_>) -> Result<()> {
    let ab = s.sched.alpha_bar;
    let total_log: f64 = s.log_x.iter().sum();
    let guess = if s.log_x.is_empty() || total_log <= 0.0 {
        0.5 * ab
    } else {
        (s.log_x.len() as f64 / total_log).clamp(0.01 * ab, ab)
    };
    for attempt in 0..INIT_ATTEMPTS {
        s.alpha1 = if attempt == 0 { guess } else { ab * attempt as f64 / INIT_ATTEMPTS as f64 };
        let ll = s.log_likelihood();
        if ll.is_finite() || (s.log_x.is_empty() && ll == 0.0) {
            return Ok(());
        }
    }
    Err(Error::InitFailure { attempts: INIT_ATTEMPTS })
}
