//! Oracles shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Gamma};
use statrs::function::gamma::gamma;
use tailmix::dist::ParetoMixture;
use tailmix::levy::LevySpec;
use tailmix::mcmc::{batch_means_mcse, run_chain, McmcConfig};
use tailmix::parmix::ParmixHyper;

/// Mean and sd of `Gamma(shape, rate)` truncated to `(0, upper]`.
pub fn truncated_gamma_moments(shape: f64, rate: f64, upper: f64) -> (f64, f64) {
    let mass = |k: f64| Gamma::new(k, rate).unwrap().cdf(upper);
    let z = mass(shape);
    let m1 = shape / rate * mass(shape + 1.0) / z;
    let m2 = shape * (shape + 1.0) / (rate * rate) * mass(shape + 2.0) / z;
    (m1, (m2 - m1 * m1).sqrt())
}

pub struct ConjugateCheck {
    pub exact_mean: f64,
    pub exact_sd: f64,
    pub chain_mean: f64,
    pub chain_sd: f64,
    pub mcse_mean: f64,
    pub mcse_sd: f64,
}

impl ConjugateCheck {
    pub fn passes(&self) -> bool {
        (self.chain_mean - self.exact_mean).abs() <= 3.0 * self.mcse_mean
            && (self.chain_sd - self.exact_sd).abs() <= 3.0 * self.mcse_sd
    }
}

/// Pure-Pareto sampler (`K = 0`) against the truncated-Gamma posterior of
/// `α₁` under its uniform prior, on `n` points drawn from Pareto(`alpha`).
pub fn conjugate_check(alpha: f64, n: usize, seed: u64) -> ConjugateCheck {
    let data = ParetoMixture::pure(alpha).unwrap().sample(n, seed);
    let hyper = ParmixHyper::default_for(n as u64).unwrap();
    let cfg = McmcConfig { n_iter: 42_000, burn_in: 2_000, k: 0, seed: seed ^ 0x5eed, ..McmcConfig::default() };
    let chain = run_chain(&data, &hyper, &cfg).unwrap();
    let rate: f64 = data.iter().map(|x| x.ln()).sum();
    let (exact_mean, exact_sd) = truncated_gamma_moments(n as f64 + 1.0, rate, hyper.schedule.alpha_bar);
    let a = chain.alpha1();
    let k = a.len() as f64;
    let chain_mean = a.iter().sum::<f64>() / k;
    let dev: Vec<f64> = a.iter().map(|v| (v - chain_mean).powi(2)).collect();
    let var = dev.iter().sum::<f64>() / (k - 1.0);
    let chain_sd = var.sqrt();
    // Delta method on the batch-means error of the squared deviations.
    let mcse_sd = batch_means_mcse(&dev) / (2.0 * chain_sd);
    ConjugateCheck { exact_mean, exact_sd, chain_mean, chain_sd, mcse_mean: batch_means_mcse(&a), mcse_sd }
}

/// Posterior over `(z₁, z₂)` for two observations under `K = 1`, by
/// midpoint quadrature over `(α₁, w₁, d)` on a `grid³` lattice. Index
/// `2 z₁ + z₂`.
pub fn allocation_posterior_grid(x: [f64; 2], hyper: &ParmixHyper, grid: usize) -> [f64; 4] {
    let s = hyper.schedule;
    let mut acc = [0.0; 4];
    let g = grid as f64;
    for i in 0..grid {
        let a1 = s.alpha_bar * (i as f64 + 0.5) / g;
        for j in 0..grid {
            let w1 = s.w_low + (1.0 - s.w_low) * (j as f64 + 0.5) / g;
            for l in 0..grid {
                let a2 = a1 + s.tau + s.alpha_bar * (l as f64 + 0.5) / g;
                let comp = |z: usize, xi: f64| {
                    if z == 0 {
                        w1 * a1 * xi.powf(-a1 - 1.0)
                    } else {
                        (1.0 - w1) * a2 * xi.powf(-a2 - 1.0)
                    }
                };
                for z1 in 0..2 {
                    for z2 in 0..2 {
                        acc[2 * z1 + z2] += comp(z1, x[0]) * comp(z2, x[1]);
                    }
                }
            }
        }
    }
    let total: f64 = acc.iter().sum();
    acc.map(|v| v / total)
}

/// Empirical `(z₁, z₂)` frequencies from a `K = 1` chain on two points.
pub fn allocation_posterior_chain(x: [f64; 2], hyper: &ParmixHyper, seed: u64) -> [f64; 4] {
    let cfg = McmcConfig {
        n_iter: 205_000,
        burn_in: 5_000,
        thin: 5,
        k: 1,
        seed,
        record_allocations: true,
        ..McmcConfig::default()
    };
    let chain = run_chain(&x, hyper, &cfg).unwrap();
    let mut acc = [0.0; 4];
    for st in &chain.states {
        let z = st.allocations.as_ref().unwrap();
        acc[2 * z[0] as usize + z[1] as usize] += 1.0;
    }
    let total = chain.states.len() as f64;
    acc.map(|v| v / total)
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Maximum distance between the empirical CDF of `values` and `cdf`.
pub fn ks_distance(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// SHA-256 of every file in `dir`, keyed by file name.
pub fn hash_dir(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let bytes = fs::read(&path).unwrap();
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), digest);
    }
    out
}

pub fn configs_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn log_grid(lo: i32, hi: i32, per_decade: usize) -> Vec<f64> {
    let steps = (hi - lo) as usize * per_decade;
    (0..=steps).map(|i| 10f64.powf(lo as f64 + i as f64 / per_decade as f64)).collect()
}

/// Twenty specs mixing DP and NGGP, including some stable (`τ = 0`) ones.
pub fn random_specs(seed: u64) -> Vec<LevySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..20)
        .map(|i| {
            let a = 10f64.powf(rng.random_range(-1.0..1.0));
            if i % 3 == 0 {
                LevySpec::dirichlet(a).unwrap()
            } else {
                let kappa = rng.random_range(0.05..0.95);
                let tau = if i % 3 == 1 { 0.0 } else { rng.random_range(0.1..3.0) };
                LevySpec::new(a, kappa, tau).unwrap()
            }
        })
        .collect()
}

/// `∫ (1 − e^{−sv}) ρ(v) dv` by composite Simpson on `y = ln v`, with the
/// large-`v` tail of the stable case added analytically.
pub fn laplace_quadrature(spec: &LevySpec, s: f64) -> f64 {
    let (a, kappa, tau) = (spec.a(), spec.kappa(), spec.tau());
    let c = a / gamma(1.0 - kappa);
    let f = |y: f64| -> f64 {
        let v = y.exp();
        c * -(-s * v).exp_m1() * (-kappa * y).exp() * (-tau * v).exp()
    };
    let (lo, hi) = (-90.0, 60.0);
    let m = 60_000;
    let h = (hi - lo) / m as f64;
    let mut sum = f(lo) + f(hi);
    for i in 1..m {
        sum += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let mut total = sum * h / 3.0;
    if tau == 0.0 {
        total += c * (-kappa * hi).exp() / kappa;
    }
    total
}
