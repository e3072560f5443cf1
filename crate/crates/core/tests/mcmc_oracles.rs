mod common;

use common::*;
use tailmix::dist::ParetoMixture;
use tailmix::error::Error;
use tailmix::mcmc::{posterior_tail_summary, read_chain, run_chain, validate_chain, write_chain, McmcConfig};
use tailmix::parmix::{ParmixHyper, TruthSpec};

#[test]
fn conjugate_posterior_matches() {
    for (alpha, seed) in [(1.0, 1), (1.8, 2), (2.5, 3)] {
        let c = conjugate_check(alpha, 1000, seed);
        assert!(
            c.passes(),
            "alpha {alpha}: mean {} vs {} (mcse {}), sd {} vs {} (mcse {})",
            c.chain_mean,
            c.exact_mean,
            c.mcse_mean,
            c.chain_sd,
            c.exact_sd,
            c.mcse_sd
        );
    }
}

#[test]
fn truncated_gamma_oracle_limits() {
    // Far from the truncation point the moments are the untruncated ones.
    let (m, s) = truncated_gamma_moments(101.0, 100.0, 50.0);
    assert!((m - 1.01).abs() < 1e-12 && (s - 101f64.sqrt() / 100.0).abs() < 1e-12);
    let (m, _) = truncated_gamma_moments(101.0, 100.0, 1.0);
    assert!(m < 1.0);
}

#[test]
fn prior_only_chain_matches_g1() {
    let hyper = ParmixHyper::default_for(10_000).unwrap();
    let cfg = McmcConfig { n_iter: 102_000, burn_in: 2_000, thin: 20, k: 3, seed: 77, ..McmcConfig::default() };
    let chain = run_chain(&[], &hyper, &cfg).unwrap();
    assert_eq!(chain.states.len(), 5000);
    let ab = hyper.schedule.alpha_bar;
    let d = ks_distance(&chain.alpha1(), |a| (a / ab).clamp(0.0, 1.0));
    assert!(d < 0.05, "KS distance {d}");
}

#[test]
fn allocation_posterior_matches_brute_force() {
    let x = [1.3, 6.0];
    let hyper = ParmixHyper::default_for(100).unwrap();
    let exact = allocation_posterior_grid(x, &hyper, 50);
    let chain = allocation_posterior_chain(x, &hyper, 5);
    let tv = total_variation(&exact, &chain);
    assert!(tv < 0.05, "exact {exact:?} chain {chain:?} tv {tv}");
}

#[test]
fn chains_are_reproducible() {
    let truth = TruthSpec::two_component(0.5, 1.0, 3.0).unwrap();
    let data = truth.to_mixture().sample(500, 4);
    let hyper = ParmixHyper::default_for(500).unwrap();
    let cfg = McmcConfig { n_iter: 600, burn_in: 100, seed: 8, ..McmcConfig::default() };
    let a = run_chain(&data, &hyper, &cfg).unwrap();
    let b = run_chain(&data, &hyper, &cfg).unwrap();
    assert_eq!(a, b);
    let c = run_chain(&data, &hyper, &McmcConfig { seed: 9, ..cfg }).unwrap();
    assert_ne!(a.alpha1(), c.alpha1());
    validate_chain(&a).unwrap();
}

#[test]
fn chain_files_round_trip() {
    let data = ParetoMixture::pure(1.5).unwrap().sample(300, 1);
    let hyper = ParmixHyper::default_for(300).unwrap();
    let cfg = McmcConfig { n_iter: 300, burn_in: 50, thin: 2, k: 3, seed: 2, ..McmcConfig::default() };
    let chain = run_chain(&data, &hyper, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_chain(&chain, dir.path(), "c").unwrap();
    let back = read_chain(dir.path(), "c").unwrap();
    assert_eq!(back, chain);
}

#[test]
fn acceptance_rates_in_range_with_default_scales() {
    let truth = TruthSpec::two_component(0.5, 1.0, 3.0).unwrap();
    let data = truth.to_mixture().sample(5000, 6);
    let hyper = ParmixHyper::default_for(5000).unwrap();
    let chain = run_chain(&data, &hyper, &McmcConfig { seed: 3, ..McmcConfig::default() }).unwrap();
    let acc = chain.acceptance;
    assert!(acc.alpha1 > 0.05 && acc.alpha1 < 0.95, "{acc:?}");
    let off = acc.offsets.unwrap();
    assert!(off > 0.05 && off < 0.95, "{acc:?}");
}

#[test]
fn truncation_level_does_not_move_the_tail_index() {
    let truth = TruthSpec::two_component(0.5, 1.0, 3.0).unwrap();
    let data = truth.to_mixture().sample(5000, 12);
    let hyper = ParmixHyper::default_for(5000).unwrap();
    let summary = |k: usize| {
        let cfg = McmcConfig { n_iter: 8000, burn_in: 1000, k, seed: 40 + k as u64, ..McmcConfig::default() };
        posterior_tail_summary(&run_chain(&data, &hyper, &cfg).unwrap(), &[0.5], &[]).unwrap()
    };
    let (s5, s10) = (summary(5), summary(10));
    let tol = 3.0 * (s5.mcse_mean.powi(2) + s10.mcse_mean.powi(2)).sqrt();
    assert!((s5.mean - s10.mean).abs() <= tol, "K=5 {} K=10 {} tol {tol}", s5.mean, s10.mean);
}

#[test]
fn summary_hand_example() {
    let data = ParetoMixture::pure(1.0).unwrap().sample(50, 1);
    let hyper = ParmixHyper::default_for(50).unwrap();
    let mut chain =
        run_chain(&data, &hyper, &McmcConfig { n_iter: 4, burn_in: 1, k: 0, ..McmcConfig::default() }).unwrap();
    for (s, a) in chain.states.iter_mut().zip([1.0, 1.2, 0.8]) {
        s.alpha1 = a;
    }
    let sum = posterior_tail_summary(&chain, &[0.5], &[(1.0, 10.0)]).unwrap();
    assert!((sum.mean - 1.0).abs() < 1e-15);
    assert_eq!(sum.quantiles, vec![(0.5, 1.0)]);
    assert_eq!(sum.neighbourhoods[0].mass, 1.0);
}

#[test]
fn bad_data_is_rejected() {
    let hyper = ParmixHyper::default_for(100).unwrap();
    let cfg = McmcConfig::default();
    assert!(matches!(run_chain(&[0.5, 2.0], &hyper, &cfg), Err(Error::Domain(_))));
    assert!(matches!(run_chain(&[f64::NAN], &hyper, &cfg), Err(Error::Domain(_))));
    assert!(matches!(run_chain(&[2.0, f64::INFINITY], &hyper, &cfg), Err(Error::InitFailure { .. })));
    assert!(run_chain(&[2.0], &hyper, &McmcConfig { burn_in: 5000, ..cfg }).is_err());
}
