//! Lévy-measure calculus for homogeneous normalised random measures.
//!
//! The intensity is `ρ(dv) = a/Γ(1−κ) · v^{−κ−1} e^{−τv} dv` (NGGP); `κ = 0`
//! gives the Gamma process whose normalisation is the Dirichlet process.
//! The Laplace exponent `Ψ(s) = ∫ (1 − e^{−sv}) ρ(dv)` and its inverse are
//! available in closed form for the whole family.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr, gamma_ur};

use crate::dist::io::format_f64;
use crate::dist::WEIGHT_TOLERANCE;
use crate::error::{domain, invalid, Error, Result};
use crate::seeds::{self, Stream};

/// Parameters `(a, κ, τ)` of a homogeneous NGGP intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct LevySpec {
    a: f64,
    kappa: f64,
    tau: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    a: f64,
    #[serde(default)]
    kappa: f64,
    #[serde(default = "one")]
    tau: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawSpec> for LevySpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        LevySpec::new(r.a, r.kappa, r.tau)
    }
}

impl From<LevySpec> for RawSpec {
    fn from(s: LevySpec) -> Self {
        RawSpec { a: s.a, kappa: s.kappa, tau: s.tau }
    }
}

impl LevySpec {
    /// `κ = 0` requires `τ > 0`; `κ = 0, τ ≠ 1` is a rescaled Gamma process
    /// and normalises to the same Dirichlet process as `τ = 1`.
    pub fn new(a: f64, kappa: f64, tau: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid(format!("total mass a must be > 0, got {a}")));
        }
        if !(0.0..1.0).contains(&kappa) {
            return Err(invalid(format!("stability index kappa must lie in [0, 1), got {kappa}")));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(invalid(format!("tilting tau must be >= 0, got {tau}")));
        }
        if kappa == 0.0 && tau == 0.0 {
            return Err(invalid("kappa = 0 requires tau > 0"));
        }
        Ok(Self { a, kappa, tau })
    }

    /// Dirichlet process with total mass `a`, i.e. NGGP(a, 0, 1).
    pub fn dirichlet(a: f64) -> Result<Self> {
        Self::new(a, 0.0, 1.0)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn is_dirichlet(&self) -> bool {
        self.kappa == 0.0
    }

    /// `Ψ(s)`.
    pub fn laplace_exponent(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(domain(format!("Laplace exponent needs s >= 0, got {s}")));
        }
        let Self { a, kappa, tau } = *self;
        Ok(if kappa == 0.0 {
            a * (s / tau).ln_1p()
        } else if tau == 0.0 {
            a / kappa * s.powf(kappa)
        } else {
            a / kappa * tau.powf(kappa) * (kappa * (s / tau).ln_1p()).exp_m1()
        })
    }

    /// `Ψ(e^{ln_s})`, usable where `s` itself would overflow.
    pub fn laplace_exponent_at_ln(&self, ln_s: f64) -> Result<f64> {
        if ln_s.is_nan() {
            return Err(domain("Laplace exponent needs a finite ln s"));
        }
        if ln_s == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let Self { a, kappa, tau } = *self;
        Ok(if tau == 0.0 {
            a / kappa * (kappa * ln_s).exp()
        } else {
            let lp = ln_1p_exp(ln_s - tau.ln());
            if kappa == 0.0 {
                a * lp
            } else {
                a / kappa * tau.powf(kappa) * (kappa * lp).exp_m1()
            }
        })
    }

    /// `Ψ^{−1}(u)`; `+∞` once the inverse leaves the `f64` range.
    pub fn inverse_laplace_exponent(&self, u: f64) -> Result<f64> {
        Ok(self.ln_inverse_laplace_exponent(u)?.exp())
    }

    /// `ln Ψ^{−1}(u)`, finite far beyond the point where `Ψ^{−1}(u)` overflows.
    pub fn ln_inverse_laplace_exponent(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(domain(format!("inverse Laplace exponent needs u >= 0, got {u}")));
        }
        if u == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let Self { a, kappa, tau } = *self;
        Ok(if kappa == 0.0 {
            // τ (e^{u/a} − 1)
            tau.ln() + ln_expm1(u / a)
        } else if tau == 0.0 {
            (kappa * u / a).ln() / kappa
        } else {
            // τ [(1 + κu/(a τ^κ))^{1/κ} − 1]
            let z = (kappa * u / (a * tau.powf(kappa))).ln_1p() / kappa;
            tau.ln() + ln_expm1(z)
        })
    }

    /// Growth function `h_γ(x) = log|log x| / Ψ^{−1}(γ log|log x| / x)`.
    ///
    /// Underflows to 0 for very small `x`; use [`Self::ln_h_gamma`] there.
    pub fn h_gamma(&self, gamma: f64, x: f64) -> Result<f64> {
        Ok(self.ln_h_gamma(gamma, x)?.exp())
    }

    /// `ln h_γ(x)`, defined for `γ > 0` and `0 < x < e^{−e}`.
    pub fn ln_h_gamma(&self, gamma: f64, x: f64) -> Result<f64> {
        if !(gamma > 0.0) {
            return Err(domain(format!("h_gamma needs gamma > 0, got {gamma}")));
        }
        if !(x > 0.0 && x < (-std::f64::consts::E).exp()) {
            return Err(domain(format!("h_gamma needs 0 < x < e^-e, got {x}")));
        }
        let ll = x.ln().abs().ln();
        Ok(ll.ln() - self.ln_inverse_laplace_exponent(gamma * ll / x)?)
    }

    /// Lévy tail mass `N(v) = ρ([v, ∞))`, on the log scale.
    fn ln_levy_tail(&self, v: f64) -> f64 {
        let Self { a, kappa, tau } = *self;
        if tau == 0.0 {
            return (a / (kappa * gamma(1.0 - kappa))).ln() - kappa * v.ln();
        }
        let z = tau * v;
        // N(v) = a τ^κ / Γ(1−κ) · Γ(−κ, z)
        let ln_upper = ln_upper_gamma_neg(kappa, z);
        a.ln() + kappa * tau.ln() - gamma(1.0 - kappa).ln() + ln_upper
    }

    /// Expected total size of all jumps smaller than `c`.
    fn small_jump_mass(&self, c: f64) -> f64 {
        let Self { a, kappa, tau } = *self;
        if tau == 0.0 {
            a * c.powf(1.0 - kappa) / ((1.0 - kappa) * gamma(1.0 - kappa))
        } else {
            a * tau.powf(kappa - 1.0) * gamma_lr(1.0 - kappa, tau * c)
        }
    }

    /// Inverse Lévy tail: the `v` with `N(v) = level`.
    fn inverse_levy_tail(&self, level: f64) -> f64 {
        let target = level.ln();
        if self.tau == 0.0 {
            let c = (self.a / (self.kappa * gamma(1.0 - self.kappa))).ln();
            return ((c - target) / self.kappa).exp();
        }
        // N is decreasing in v; bisect on ln v.
        let (mut lo, mut hi) = (-740.0_f64, 700.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.ln_levy_tail(mid.exp()) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        (0.5 * (lo + hi)).exp()
    }
}

/// `ln(1 + e^x)` without overflow.
fn ln_1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(e^x − 1)` for `x > 0` without overflow.
fn ln_expm1(x: f64) -> f64 {
    if x > 35.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `ln Γ(−κ, z)` for `0 < κ < 1`, `z > 0`.
fn ln_upper_gamma_neg(kappa: f64, z: f64) -> f64 {
    if z > 40.0 {
        // Γ(s, z) ~ z^{s−1} e^{−z} Σ_k (s−1)…(s−k) / z^k with s = −κ.
        let s = -kappa;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..12 {
            term *= (s - k as f64) / z;
            sum += term;
        }
        (s - 1.0) * z.ln() - z + sum.ln()
    } else {
        // Γ(−κ, z) = (z^{−κ} e^{−z} − Γ(1−κ, z)) / κ
        let upper = gamma(1.0 - kappa) * gamma_ur(1.0 - kappa, z);
        ((z.powf(-kappa) * (-z).exp() - upper) / kappa).ln()
    }
}

/// Free-function form of [`LevySpec::laplace_exponent`].
pub fn laplace_exponent(spec: &LevySpec, s: f64) -> Result<f64> {
    spec.laplace_exponent(s)
}

pub fn inverse_laplace_exponent(spec: &LevySpec, u: f64) -> Result<f64> {
    spec.inverse_laplace_exponent(u)
}

pub fn h_gamma(spec: &LevySpec, gamma: f64, x: f64) -> Result<f64> {
    spec.h_gamma(gamma, x)
}

/// Atom location: a scalar or a `(μ, σ)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Location {
    Scalar(f64),
    Pair(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedAtom {
    pub weight: f64,
    pub location: Location,
}

/// Truncated draw of a random probability measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub atoms: Vec<WeightedAtom>,
    /// Bound on the probability mass lost to truncation.
    pub truncation_error: f64,
}

impl DiscreteMeasure {
    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.weight)
    }

    /// Inverse Simpson index `1 / Σ wᵢ²`.
    pub fn effective_atoms(&self) -> f64 {
        1.0 / self.weights().map(|w| w * w).sum::<f64>()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights().fold(0.0, f64::max)
    }

    /// Writes `weight location...` rows under a `# truncation_error` header.
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# truncation_error {}", format_f64(self.truncation_error))?;
        for atom in &self.atoms {
            match atom.location {
                Location::Scalar(x) => writeln!(out, "{} {}", format_f64(atom.weight), format_f64(x))?,
                Location::Pair(m, s) => {
                    writeln!(out, "{} {} {}", format_f64(atom.weight), format_f64(m), format_f64(s))?
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_table<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty measure table".into()))??;
        let truncation_error = header
            .strip_prefix("# truncation_error")
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Parse(format!("bad measure header {header:?}")))?;
        let mut atoms = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}"))))
                .collect::<Result<_>>()?;
            let location = match v.len() {
                2 => Location::Scalar(v[1]),
                3 => Location::Pair(v[1], v[2]),
                _ => return Err(Error::Parse(format!("expected 2 or 3 columns in {line:?}"))),
            };
            atoms.push(WeightedAtom { weight: v[0], location });
        }
        Ok(Self { atoms, truncation_error })
    }
}

/// Draws a truncated NRM with `n_atoms` atoms.
///
/// Dirichlet process: stick-breaking with `Beta(1, a)` sticks; the last kept
/// atom absorbs the unbroken remainder, and `truncation_error` is the
/// realised mass `Π(1 − Vᵢ)` that the next stick would have split off.
/// `κ > 0`: the `n_atoms` largest jumps from the inverse Lévy tail at unit
/// Poisson arrival times, normalised; `truncation_error` is the expected
/// mass of the discarded jumps divided by the kept plus expected discarded
/// mass.
///
/// Weights and locations come from two independent streams derived from
/// `seed`, so a larger `n_atoms` with the same seed extends the same draw.
pub fn sample_nrm<F>(spec: &LevySpec, mut base_sampler: F, n_atoms: usize, seed: u64) -> Result<DiscreteMeasure>
where
    F: FnMut(&mut Stream) -> Location,
{
    if n_atoms == 0 {
        return Err(invalid("n_atoms must be >= 1"));
    }
    let mut weight_rng = seeds::stream(seeds::child_seed(seed, 1));
    let mut location_rng = seeds::stream(seeds::child_seed(seed, 2));
    let (weights, truncation_error) = if spec.is_dirichlet() {
        stick_breaking(spec.a(), n_atoms, &mut weight_rng)?
    } else {
        largest_jumps(spec, n_atoms, &mut weight_rng)
    };
    let atoms = weights
        .into_iter()
        .map(|weight| WeightedAtom { weight, location: base_sampler(&mut location_rng) })
        .collect::<Vec<_>>();
    debug_assert!((atoms.iter().map(|a| a.weight).sum::<f64>() - 1.0).abs() <= WEIGHT_TOLERANCE);
    Ok(DiscreteMeasure { atoms, truncation_error })
}

fn stick_breaking<R: Rng>(a: f64, n_atoms: usize, rng: &mut R) -> Result<(Vec<f64>, f64)> {
    let beta = Beta::new(1.0, a).map_err(|e| invalid(e.to_string()))?;
    let mut weights = Vec::with_capacity(n_atoms);
    let mut remaining = 1.0;
    for _ in 0..n_atoms {
        let v: f64 = beta.sample(rng);
        weights.push(remaining * v);
        remaining *= 1.0 - v;
    }
    // Last atom takes the unbroken remainder of its stick.
    let last = weights.len() - 1;
    weights[last] += remaining;
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok((weights, remaining))
}

fn largest_jumps<R: Rng>(spec: &LevySpec, n_atoms: usize, rng: &mut R) -> (Vec<f64>, f64) {
    let mut arrival = 0.0;
    let mut jumps = Vec::with_capacity(n_atoms);
    for _ in 0..n_atoms {
        let e: f64 = Exp1.sample(rng);
        arrival += e;
        jumps.push(spec.inverse_levy_tail(arrival));
    }
    let kept: f64 = jumps.iter().sum();
    let smallest = *jumps.last().expect("n_atoms >= 1");
    let discarded = spec.small_jump_mass(smallest);
    for j in &mut jumps {
        *j /= kept;
    }
    (jumps, discarded / (kept + discarded))
}
