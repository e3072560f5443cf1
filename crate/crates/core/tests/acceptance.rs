//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=1,3,9` restricts the run to the listed criteria.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::time::{Duration, Instant};

use common::*;
use tailmix::dist::{classify_mixture_tail, MomentTableRow, TailIndex};
use tailmix::harness::{run_experiment, write_outputs, ExperimentConfig, ExperimentOutput, ResultRow};
use tailmix::parallel::with_threads;
use tailmix::parmix::{h_envelope, parmix_prior_sample, ParmixHyper};

type Hashes = BTreeMap<String, String>;
type Criterion = (u32, &'static str, Duration, fn(&mut Runs) -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Experiment runs shared between criteria: config name → file hashes at
/// the first thread count used.
#[derive(Default)]
struct Runs {
    hashes: BTreeMap<String, (usize, Hashes)>,
}

impl Runs {
    fn run(&mut self, name: &str, threads: usize) -> ExperimentOutput {
        let cfg = ExperimentConfig::load(&configs_dir().join(name)).unwrap();
        let out = with_threads(Some(threads), || run_experiment(&cfg)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&out, dir.path()).unwrap();
        self.hashes.entry(name.to_string()).or_insert((threads, hash_dir(dir.path())));
        out
    }
}

fn value(rows: &[ResultRow], n: u64, rep: u64, stat: &str) -> Option<f64> {
    rows.iter().find(|r| r.n == n && r.replicate == rep && r.statistic == stat).and_then(|r| r.value)
}

fn c1(runs: &mut Runs) -> Outcome {
    let out = runs.run("calibration.json", 4);
    let mut ok = true;
    let mut parts = Vec::new();
    for cell in out.summary["cells"].as_array().unwrap() {
        let within = cell["within_band"].as_u64().unwrap();
        ok &= within >= 95;
        parts.push(format!("alpha={} {}/100", cell["alpha"], within));
    }
    outcome(ok, parts.join(", "))
}

fn c2(_: &mut Runs) -> Outcome {
    let grid = log_grid(-6, 6, 4);
    let mut worst_rt: f64 = 0.0;
    for spec in random_specs(11) {
        for &u in &grid {
            let ln_s = spec.ln_inverse_laplace_exponent(u).unwrap();
            worst_rt = worst_rt.max(rel(spec.laplace_exponent_at_ln(ln_s).unwrap(), u));
        }
        for &s in &grid {
            let u = spec.laplace_exponent(s).unwrap();
            worst_rt = worst_rt.max(rel(spec.inverse_laplace_exponent(u).unwrap(), s));
        }
    }
    let points: Vec<f64> = log_grid(-3, 2, 2)[..10].to_vec();
    let mut worst_q: f64 = 0.0;
    let mut specs = random_specs(12);
    specs.truncate(9);
    specs.push(tailmix::levy::LevySpec::new(1.0, 0.5, 0.0).unwrap());
    for spec in &specs {
        for &s in &points {
            worst_q = worst_q.max(rel(spec.laplace_exponent(s).unwrap(), laplace_quadrature(spec, s)));
        }
    }
    outcome(
        worst_rt <= 1e-10 && worst_q <= 1e-6,
        format!("max round-trip rel err {worst_rt:.2e}, max quadrature rel err {worst_q:.2e}"),
    )
}

fn c3(_: &mut Runs) -> Outcome {
    use TailIndex::{Infinite, Zero};
    let a = TailIndex::Finite(3.0);
    let expected = [
        (Zero, Zero, a, MomentTableRow::HeavyLocationHeavyScale, Zero),
        (Zero, Infinite, a, MomentTableRow::HeavyLocationThinScale, Zero),
        (Infinite, Zero, Infinite, MomentTableRow::ThinLocationHeavyScale, Zero),
        (Infinite, Infinite, a, MomentTableRow::ThinLocationThinScale, a),
    ];
    let mut rows = HashSet::new();
    let mut ok = true;
    for (mu, sigma, kernel, row, index) in expected {
        match classify_mixture_tail(mu, sigma, kernel) {
            Ok(c) => {
                ok &= c.table_case == Some(row) && c.index == index;
                rows.insert(row);
            }
            Err(_) => ok = false,
        }
    }
    ok &= rows.len() == 4;
    outcome(ok, format!("{} of 4 rows reproduced", rows.len()))
}

fn c4(runs: &mut Runs) -> Outcome {
    let out = runs.run("singleton_mfm.json", 4);
    let s = &out.summary;
    let (sd, lo, hi) = (s["ck_sd"].as_f64(), s["ck_min"].as_f64(), s["ck_max"].as_f64());
    let defined = s["ck_defined"].as_u64() == Some(50) && s["draws"].as_u64() == Some(50);
    let ok = defined && sd.is_some_and(|v| v < 0.5) && lo.is_some_and(|v| v >= 2.0) && hi.is_some_and(|v| v <= 4.0);
    outcome(ok, format!("50 draws, ck sd {sd:?}, range [{lo:?}, {hi:?}], all defined {defined}"))
}

fn c5(_: &mut Runs) -> Outcome {
    let hyper = ParmixHyper::default_for(100_000).unwrap();
    let mut violations = 0;
    for seed in 0..1000 {
        let m = parmix_prior_sample(&hyper, 50, seed).unwrap();
        for x in [1.0, 10.0, 1e3, 1e6] {
            violations += usize::from(!h_envelope(&m, &hyper.schedule, x).unwrap().holds);
        }
    }
    outcome(violations == 0, format!("{violations} violations over 1000 draws x 4 points"))
}

fn c6(_: &mut Runs) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (alpha, seed) in [(1.0, 1), (1.8, 2), (2.5, 3)] {
        let c = conjugate_check(alpha, 1000, seed);
        ok &= c.passes();
        parts.push(format!("mean {:.4}/{:.4} sd {:.4}/{:.4}", c.chain_mean, c.exact_mean, c.chain_sd, c.exact_sd));
    }
    outcome(ok, parts.join("; "))
}

fn c7(_: &mut Runs) -> Outcome {
    let x = [1.3, 6.0];
    let hyper = ParmixHyper::default_for(100).unwrap();
    let exact = allocation_posterior_grid(x, &hyper, 50);
    let chain = allocation_posterior_chain(x, &hyper, 5);
    let tv = total_variation(&exact, &chain);
    // z₁ marginal: states with z₁ = 0 are indices 0 and 1.
    let tv_z1 = (exact[0] + exact[1] - chain[0] - chain[1]).abs();
    outcome(tv < 0.05 && tv_z1 < 0.05, format!("joint TV {tv:.4}, z1 marginal TV {tv_z1:.4}"))
}

fn c8(runs: &mut Runs) -> Outcome {
    let out = runs.run("consistency.json", 4);
    let rows = &out.rows;
    let reps = 10;
    let sizes = [500, 5000, 50000];
    let mut monotone = 0;
    let mut mass_up = 0;
    let mut means = Vec::new();
    for r in 0..reps {
        let sds: Vec<Option<f64>> = sizes.iter().map(|&n| value(rows, n, r, "posterior_sd")).collect();
        if sds.iter().all(Option::is_some) && sds.windows(2).all(|w| w[1].unwrap() < w[0].unwrap()) {
            monotone += 1;
        }
        let (lo, hi) = (value(rows, 500, r, "mass[eps=0.5]"), value(rows, 50000, r, "mass[eps=0.5]"));
        if let (Some(lo), Some(hi)) = (lo, hi) {
            mass_up += usize::from(hi > lo);
        }
        if let Some(m) = value(rows, 50000, r, "posterior_mean") {
            means.push(m);
        }
    }
    means.sort_by(f64::total_cmp);
    let median = if means.is_empty() {
        f64::NAN
    } else if means.len() % 2 == 1 {
        means[means.len() / 2]
    } else {
        0.5 * (means[means.len() / 2 - 1] + means[means.len() / 2])
    };
    let (a, b, c) = (monotone >= 9, mass_up >= 9, (median - 1.0).abs() <= 0.25);
    outcome(
        a && b && c,
        format!(
            "(a) sd monotone {monotone}/10 {}; (b) mass up {mass_up}/10 {}; (c) median mean {median:.4} {}",
            pf(a),
            pf(b),
            pf(c)
        ),
    )
}

fn c9(runs: &mut Runs) -> Outcome {
    let out = runs.run("kl_checklist.json", 4);
    let s = &out.summary;
    let identity = s["kl_identity"].as_f64();
    let id_ok = s["identity_below_1e-9"].as_bool() == Some(true);
    let trunc_ok = s["truncation_strictly_decreasing"].as_bool() == Some(true);
    let box_ok = s["box_strictly_decreasing"].as_bool() == Some(true);
    let list = |key: &str, field: &str| -> Vec<String> {
        s[key].as_array().unwrap().iter().map(|v| format!("{:.3e}", v[field].as_f64().unwrap_or(f64::NAN))).collect()
    };
    outcome(
        id_ok && trunc_ok && box_ok,
        format!(
            "identity {identity:?} {}; truncation [{}] {}; boxes [{}] {}",
            pf(id_ok),
            list("truncation", "kl").join(", "),
            pf(trunc_ok),
            list("box", "max_kl").join(", "),
            pf(box_ok)
        ),
    )
}

fn c10(runs: &mut Runs) -> Outcome {
    let mut names: Vec<String> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    let mut mismatched = Vec::new();
    for name in &names {
        if !runs.hashes.contains_key(name) {
            runs.run(name, 4);
        }
        let (first, reference) = runs.hashes[name].clone();
        let cfg = ExperimentConfig::load(&configs_dir().join(name)).unwrap();
        let again = with_threads(Some(1), || run_experiment(&cfg)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&again, dir.path()).unwrap();
        if hash_dir(dir.path()) != reference {
            mismatched.push(format!("{name} ({first} vs 1 threads)"));
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("{} configs re-run at 1 thread vs 4; mismatched: {:?}", names.len(), mismatched),
    )
}

fn pf(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "estimator calibration", Duration::from_secs(60), c1),
        (2, "Laplace exponent round trips and quadrature", Duration::from_secs(60), c2),
        (3, "moment table rows", Duration::from_secs(60), c3),
        (4, "singleton index, MFM prior", Duration::from_secs(600), c4),
        (5, "envelope on 1000 prior draws", Duration::from_secs(60), c5),
        (6, "conjugate truncated-Gamma posterior", Duration::from_secs(60), c6),
        (7, "brute-force allocation posterior", Duration::from_secs(300), c7),
        (8, "posterior consistency", Duration::from_secs(1800), c8),
        (9, "KL checklist", Duration::from_secs(60), c9),
        (10, "determinism across thread counts", Duration::MAX, c10),
    ];
    let only: Option<HashSet<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut runs = Runs::default();
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = check(&mut runs);
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        let budget = if limit == Duration::MAX { String::new() } else { format!(" (limit {}s)", limit.as_secs()) };
        println!(
            "criterion {id:>2} {} {name}: {} [{:.1}s{budget}{}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over time" }
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
