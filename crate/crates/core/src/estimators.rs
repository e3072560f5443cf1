//! Tail-index estimators, the sequence schedule, and the uniform test.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Result of an estimator that may have no value on a given sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Estimate {
    Defined(f64),
    /// The upper exceedance count is zero.
    NotDefined,
}

impl Estimate {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Estimate::Defined(v) => Some(v),
            Estimate::NotDefined => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, Estimate::Defined(_))
    }
}

/// Exceedance counts `(m_s, m_{s+1})` with `m_t = #{Xᵢ > e^t}`.
pub fn exceedance_counts(data: &[f64], s: f64) -> (usize, usize) {
    let lower = s.exp();
    let upper = (s + 1.0).exp();
    data.iter().fold((0, 0), |(ms, ms1), &x| (ms + usize::from(x > lower), ms1 + usize::from(x > upper)))
}

/// `α̂_s = log p̂_s − log p̂_{s+1} = log(m_s / m_{s+1})`.
pub fn carpentier_kim(data: &[f64], s: f64) -> Result<Estimate> {
    if data.is_empty() {
        return Err(domain("carpentier_kim needs a nonempty sample"));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(domain(format!("threshold exponent s must be > 0, got {s}")));
    }
    let (ms, ms1) = exceedance_counts(data, s);
    Ok(ratio_estimate(ms, ms1))
}

fn ratio_estimate(ms: usize, ms1: usize) -> Estimate {
    if ms1 == 0 {
        Estimate::NotDefined
    } else {
        Estimate::Defined((ms as f64 / ms1 as f64).ln())
    }
}

/// Hill estimator on the `k` largest order statistics.
///
/// With `X_(1) ≥ X_(2) ≥ …` the estimate is
/// `[ k⁻¹ Σ_{i≤k} log X_(i) − log X_(k+1) ]⁻¹`.
pub fn hill(data: &[f64], k: usize) -> Result<f64> {
    let n = data.len();
    if k == 0 || k >= n {
        return Err(domain(format!("hill needs 1 <= k < n, got k = {k}, n = {n}")));
    }
    if data.iter().any(|&x| !(x > 0.0)) {
        return Err(domain("hill needs strictly positive data"));
    }
    let mut sorted = data.to_vec();
    // Put the k+1 largest values in front, the (k+1)-th largest at index k.
    sorted.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let threshold = sorted[k].ln();
    let mean_log = sorted[..k].iter().map(|x| x.ln()).sum::<f64>() / k as f64;
    Ok(1.0 / (mean_log - threshold))
}

/// The `n`-dependent sequences governing the Pareto-mixture prior and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub n: u64,
    /// Upper bound `ᾱ_n` on the leading exponent.
    pub alpha_bar: f64,
    /// Gap `τ_n` between the leading and the remaining exponents.
    pub tau: f64,
    /// Lower bound `w̲_n` on the leading weight.
    pub w_low: f64,
    /// Threshold exponent `s_n` of the test statistic.
    pub s: f64,
    /// Envelope constant `B_n = 2ᾱ_n / w̲_n`.
    pub envelope_b: f64,
}

/// Finite-`n` evaluation of the asymptotic ordering relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingCheck {
    /// `w̲_n τ_n > ᾱ_n / log n`.
    pub weight_gap: bool,
    /// `log(ᾱ_n / w̲_n) < τ_n log n / ᾱ_n`.
    pub log_ratio: bool,
    /// `1 < s_n < log n / ᾱ_n`.
    pub threshold: bool,
    /// `B_n < min(e^{τ_n s_n}, τ_n log n)`.
    pub envelope: bool,
}

impl OrderingCheck {
    pub fn prior_relations_hold(&self) -> bool {
        self.weight_gap && self.log_ratio
    }
}

impl Schedule {
    pub fn ordering(&self) -> OrderingCheck {
        let log_n = (self.n as f64).ln();
        OrderingCheck {
            weight_gap: self.w_low * self.tau > self.alpha_bar / log_n,
            log_ratio: (self.alpha_bar / self.w_low).ln() < self.tau * log_n / self.alpha_bar,
            threshold: 1.0 < self.s && self.s < log_n / self.alpha_bar,
            envelope: self.envelope_b < (self.tau * self.s).exp().min(self.tau * log_n),
        }
    }
}

/// `ᾱ = (log n)^{1/2}`, `τ = (log n)^{−1/4}`, `w̲ = (log n)^{−1/5}`,
/// `s = (log n)^{1/3}`, `B = 2ᾱ/w̲`, natural logarithms throughout.
///
/// Logs a warning when one of the ordering relations fails at this `n`.
pub fn default_schedule(n: u64) -> Result<Schedule> {
    if n < 3 {
        return Err(domain(format!("schedule needs n >= 3, got {n}")));
    }
    let log_n = (n as f64).ln();
    let alpha_bar = log_n.sqrt();
    let w_low = log_n.powf(-0.2);
    let sched =
        Schedule { n, alpha_bar, tau: log_n.powf(-0.25), w_low, s: log_n.cbrt(), envelope_b: 2.0 * alpha_bar / w_low };
    let check = sched.ordering();
    if !(check.weight_gap && check.log_ratio && check.threshold && check.envelope) {
        log::warn!("schedule ordering relations not all satisfied at n = {n}: {check:?}");
    }
    Ok(sched)
}

/// Outcome of the test `Φ = I(|α̂_s − α₀| ≥ ε/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: Estimate,
    pub reject: bool,
    /// `ε / 2`.
    pub threshold: f64,
    pub count_s: usize,
    pub count_s1: usize,
    /// Set when the statistic is undefined and the test rejects by convention.
    pub not_defined: bool,
}

/// Uniform tail-index test at the schedule's threshold exponent.
///
/// An undefined statistic (`m_{s+1} = 0`) rejects and sets `not_defined`.
pub fn uniform_test(data: &[f64], alpha0: f64, eps: f64, sched: &Schedule) -> Result<TestOutcome> {
    if !(eps > 0.0) {
        return Err(domain(format!("eps must be > 0, got {eps}")));
    }
    if data.is_empty() {
        return Err(domain("uniform_test needs a nonempty sample"));
    }
    let (count_s, count_s1) = exceedance_counts(data, sched.s);
    let statistic = ratio_estimate(count_s, count_s1);
    let threshold = eps / 2.0;
    let (reject, not_defined) = match statistic {
        Estimate::Defined(a) => ((a - alpha0).abs() >= threshold, false),
        Estimate::NotDefined => (true, true),
    };
    Ok(TestOutcome { statistic, reject, threshold, count_s, count_s1, not_defined })
}

/// `min(1, 2 exp(−n p ε² / 144))`.
pub fn hoeffding_type_bound(n: u64, p: f64, eps: f64) -> f64 {
    (2.0 * (-(n as f64) * p * eps * eps / 144.0).exp()).min(1.0)
}
