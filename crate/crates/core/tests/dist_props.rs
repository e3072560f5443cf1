use proptest::prelude::*;
use tailmix::dist::io::{read_dataset, read_mixture_table, write_dataset, write_mixture_table};
use tailmix::dist::{
    classify_base_measure, classify_mixture_tail, tail_index_analytic, BaseMeasureCase, ExplicitTail, MomentTableRow,
    ParetoAtom, ParetoMixture, PriorKind, Provenance, TailDescriptor, TailIndex,
};

fn mixture() -> impl Strategy<Value = ParetoMixture> {
    (0.05f64..1.0, 0.1f64..10.0, prop::collection::vec((0.01f64..1.0, 0.1f64..10.0), 0..5)).prop_map(|(w1, a1, raw)| {
        let total: f64 = raw.iter().map(|r| r.0).sum();
        let atoms = if raw.is_empty() {
            Vec::new()
        } else {
            raw.iter().map(|&(w, e)| ParetoAtom::new(w / total * (1.0 - w1), e)).collect()
        };
        let w1 = if raw.is_empty() { 1.0 } else { w1 };
        ParetoMixture::new(w1, a1, atoms).unwrap()
    })
}

#[test]
fn tail_index_examples() {
    let m = ParetoMixture::new(0.5, 1.0, vec![ParetoAtom::new(0.5, 2.0)]).unwrap();
    assert_eq!(tail_index_analytic(&m), TailIndex::Finite(1.0));
    assert_eq!(tail_index_analytic(&ParetoMixture::pure(3.0).unwrap()), TailIndex::Finite(3.0));
    let tie = ParetoMixture::new(0.2, 2.5, vec![ParetoAtom::new(0.3, 2.5), ParetoAtom::new(0.5, 7.0)]).unwrap();
    assert_eq!(tail_index_analytic(&tie), TailIndex::Finite(2.5));
}

#[test]
fn survival_examples() {
    let m = ParetoMixture::new(0.5, 1.0, vec![ParetoAtom::new(0.5, 2.0)]).unwrap();
    assert_eq!(m.survival(2.0).unwrap(), 0.375);
    assert_eq!(m.survival(1.0).unwrap(), 1.0);
    assert!((ParetoMixture::pure(2.0).unwrap().survival(10.0).unwrap() - 0.01).abs() < 1e-15);
    assert!(m.survival(0.5).is_err());
}

#[test]
fn construction_rejects_bad_weights() {
    assert!(ParetoMixture::new(0.5, 1.0, vec![ParetoAtom::new(0.4, 2.0)]).is_err());
    assert!(ParetoMixture::new(1.0, 0.0, vec![]).is_err());
    assert!(ParetoMixture::new(1.2, 1.0, vec![ParetoAtom::new(-0.2, 2.0)]).is_err());
    assert!(ParetoMixture::pure(f64::NAN).is_err());
}

#[test]
fn empirical_survival_matches_pure_pareto() {
    let n = 1_000_000;
    let data = ParetoMixture::pure(2.0).unwrap().sample(n, 7);
    for x in [2.0f64, 5.0, 10.0] {
        let p = x.powi(-2);
        let hat = data.iter().filter(|&&v| v > x).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hat - p).abs() <= 3.0 * se, "x={x}: {hat} vs {p}");
    }
}

#[test]
fn empirical_survival_matches_mixture() {
    let m = ParetoMixture::new(0.3, 0.8, vec![ParetoAtom::new(0.5, 2.0), ParetoAtom::new(0.2, 4.0)]).unwrap();
    let n = 400_000;
    let data = m.sample(n, 8);
    for x in [1.5, 3.0, 20.0, 300.0] {
        let p = m.survival(x).unwrap();
        let hat = data.iter().filter(|&&v| v > x).count() as f64 / n as f64;
        assert!((hat - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "x={x}");
    }
}

#[test]
fn sampling_contract() {
    let m = ParetoMixture::new(0.5, 1.0, vec![ParetoAtom::new(0.5, 3.0)]).unwrap();
    assert!(m.sample(0, 1).is_empty());
    let a = m.sample(1000, 42);
    let b = m.sample(1000, 42);
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a, m.sample(1000, 43));
    assert!(a.iter().all(|&x| x >= 1.0 && x.is_finite()));
}

#[test]
fn moment_table_rows() {
    use TailIndex::{Infinite, Zero};
    let a = TailIndex::Finite(3.0);
    let cases = [
        (Zero, Zero, a, MomentTableRow::HeavyLocationHeavyScale, Zero),
        (Zero, Infinite, a, MomentTableRow::HeavyLocationThinScale, Zero),
        (Infinite, Zero, Infinite, MomentTableRow::ThinLocationHeavyScale, Zero),
        (Infinite, Infinite, a, MomentTableRow::ThinLocationThinScale, a),
    ];
    for (mu, sigma, kernel, row, index) in cases {
        let c = classify_mixture_tail(mu, sigma, kernel).unwrap();
        assert_eq!(c.table_case, Some(row));
        assert_eq!(c.index, index);
        assert_eq!(c.provenance, Provenance::MomentTable);
    }
    assert!(classify_mixture_tail(TailIndex::Finite(2.0), Infinite, a).is_err());
}

#[test]
fn table_is_total_on_its_domain() {
    use TailIndex::{Infinite, Zero};
    for mu in [Zero, Infinite] {
        for sigma in [Zero, Infinite] {
            for kernel in [Zero, TailIndex::Finite(0.5), TailIndex::Finite(3.0), Infinite] {
                let c = classify_mixture_tail(mu, sigma, kernel).unwrap();
                assert!(c.index == Zero || c.index == kernel);
                assert!(c.table_case.is_some());
            }
        }
    }
}

#[test]
fn base_measure_examples() {
    assert_eq!(classify_base_measure(&TailDescriptor::Poly(2.0), PriorKind::Dp), BaseMeasureCase::CaseII);
    assert_eq!(classify_base_measure(&TailDescriptor::SuperPoly, PriorKind::Nggp), BaseMeasureCase::CaseI);
    let inv_log = ExplicitTail::new("1/log x", |lx: f64| -lx.ln());
    assert_eq!(classify_base_measure(&TailDescriptor::Explicit(inv_log), PriorKind::Dp), BaseMeasureCase::Uncovered);
    assert_eq!(classify_base_measure(&TailDescriptor::Poly(2.0), PriorKind::Nggp), BaseMeasureCase::Uncovered);
    assert_eq!(classify_base_measure(&TailDescriptor::SubPoly, PriorKind::Nggp), BaseMeasureCase::CaseII);
}

#[test]
fn io_round_trips() {
    let m = ParetoMixture::new(0.25, 0.7, vec![ParetoAtom::new(0.5, 1.9), ParetoAtom::new(0.25, 3.1)]).unwrap();
    let mut buf = Vec::new();
    write_mixture_table(&mut buf, &m).unwrap();
    assert_eq!(read_mixture_table(buf.as_slice()).unwrap(), m);
    let data = m.sample(500, 5);
    let mut buf = Vec::new();
    write_dataset(&mut buf, &data).unwrap();
    assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
    assert!(read_dataset("1.5\nabc\n".as_bytes()).is_err());
}

proptest! {
    #[test]
    fn survival_nonincreasing(m in mixture()) {
        let mut prev = m.survival(1.0).unwrap();
        prop_assert_eq!(prev, 1.0);
        for i in 1..200 {
            let s = m.survival(1.0 + i as f64 * i as f64 * 0.1).unwrap();
            prop_assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn log_survival_ratio_approaches_index(m in mixture()) {
        // x^{−α} w_α ≤ S(x) ≤ x^{−α}, with w_α the weight at the minimum exponent.
        let alpha = m.tail_index().value();
        let w_min: f64 = m.components().filter(|c| c.exponent == alpha).map(|c| c.weight).sum();
        for k in 4..=8 {
            let lx = (10f64).powi(k).ln();
            let ratio = -m.survival(10f64.powi(k)).unwrap().ln() / lx;
            prop_assert!(ratio >= alpha - 1e-12);
            prop_assert!(ratio - alpha <= -w_min.ln() / lx + 1e-12);
        }
    }

    #[test]
    fn log_survival_ratio_within_spread_slack(w1 in 0.1f64..1.0, a1 in 0.2f64..5.0, gap in 0.5f64..5.0) {
        let m = ParetoMixture::new(w1, a1, vec![ParetoAtom::new(1.0 - w1, a1 + gap)]).unwrap();
        let spread = m.exponent_spread();
        for k in 4..=8 {
            let lx = (10f64).powi(k).ln();
            let ratio = -m.survival(10f64.powi(k)).unwrap().ln() / lx;
            prop_assert!((ratio - a1).abs() <= 10.0 * spread / lx);
        }
    }
}
