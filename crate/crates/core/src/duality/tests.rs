use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixtures::{binomial, deterministic, multi_period_binomial, one_period, trinomial};
use crate::pricing::backward_price;
use crate::risk::RiskMeasureSpec;
use crate::settings::Settings;

fn drm<'t>(tree: &'t ScenarioTree, spec: &RiskMeasureSpec) -> DynamicRiskMeasure<'t> {
    DynamicRiskMeasure::build(tree, spec, Settings::default()).unwrap()
}

fn wc(tree: &ScenarioTree) -> DynamicRiskMeasure<'_> {
    drm(tree, &RiskMeasureSpec::worst_case())
}

#[test]
fn binomial_polytope_is_a_point() {
    let t = binomial();
    let p = build_polytope(&wc(&t), t.root()).unwrap();
    assert!((p.interior_radius.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    let q = p.interior_kernel.unwrap();
    assert!((q[0] - 1.0 / 3.0).abs() < 1e-12 && (q[1] - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn trinomial_polytope_is_a_segment() {
    // a = c/2, b = 1 − 3c/2 for c ∈ [0, 2/3]; the largest min coordinate
    // is at a = b, i.e. c = 1/2, min = 1/4
    let t = trinomial();
    let p = build_polytope(&wc(&t), t.root()).unwrap();
    assert!((p.interior_radius.unwrap() - 0.25).abs() < 1e-12);
    let q = p.interior_kernel.unwrap();
    assert!((q[0] - 0.5 * q[2]).abs() < 1e-12);
}

#[test]
fn arbitrage_polytope_is_empty() {
    let t = one_period(1.0, &[2.0, 3.0]);
    let p = build_polytope(&wc(&t), t.root()).unwrap();
    assert!(p.is_empty() && p.interior_kernel.is_none());
}

#[test]
fn dual_prices_of_reference_markets() {
    let t = binomial();
    let h = Payoff::call(&t, 0, 1.0);
    let r = dual_price(&wc(&t), &h).unwrap();
    assert!((r.root_value(&t) - 1.0 / 3.0).abs() < 1e-12);
    let k = r.nodes[t.root()].kernel.as_ref().unwrap();
    assert!((k[0] - 1.0 / 3.0).abs() < 1e-12);

    let t = trinomial();
    let r = dual_price(&wc(&t), &Payoff::call(&t, 0, 1.0)).unwrap();
    assert!((r.root_value(&t) - 1.0 / 3.0).abs() < 1e-12);
    // maximizer (1/3, 0, 2/3) sits on the boundary
    assert!(!r.nodes[t.root()].strictly_positive);
    let gap = r.nodes[t.root()].perturbation_gap.unwrap();
    assert!(gap <= PERTURBATION * 1.0 + 1e-15);

    let c = Payoff::new(NodeFunction::constant(&t, 1, 0.7));
    assert!((dual_price(&wc(&t), &c).unwrap().root_value(&t) - 0.7).abs() < 1e-12);
}

#[test]
fn trinomial_cvar_point_nine_has_no_dual_price() {
    let t = trinomial();
    let m = drm(&t, &RiskMeasureSpec::cvar(0.9));
    assert_eq!(dual_price(&m, &Payoff::call(&t, 0, 1.0)).unwrap_err(), Error::NoNa);
}

#[test]
fn witness_measures() {
    let t = binomial();
    let w = extract_witness_measure(&wc(&t)).unwrap();
    assert!(w.strictly_positive);
    assert!((w.leaf_weights.values[0] - 1.0 / 3.0).abs() < 1e-12);

    let t = multi_period_binomial(2);
    let w = extract_witness_measure(&wc(&t)).unwrap();
    let mut lw = w.leaf_weights.values.clone();
    lw.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (a, b) in lw.iter().zip([1.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 4.0 / 9.0]) {
        assert!((a - b).abs() < 1e-12);
    }

    let t = deterministic(&[1.0, 1.0, 1.0]);
    let w = extract_witness_measure(&wc(&t)).unwrap();
    assert_eq!(w.leaf_weights.values, vec![1.0]);

    let t = one_period(1.0, &[2.0, 3.0]);
    assert_eq!(extract_witness_measure(&wc(&t)).unwrap_err(), Error::NoNa);
}

#[test]
fn flat_market_witness_is_uniform() {
    let t = one_period(1.0, &[1.0, 1.0, 1.0, 1.0]);
    let w = extract_witness_measure(&wc(&t)).unwrap();
    assert!(w.leaf_weights.values.iter().all(|v| (v - 0.25).abs() < 1e-12));
}

#[test]
fn witness_is_dominated_by_rho() {
    let t = multi_period_binomial(3);
    let m = drm(&t, &RiskMeasureSpec::cvar(0.6));
    let w = extract_witness_measure(&m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let x = NodeFunction::from_fn(&t, 3, |_| rng.gen_range(-2.0..2.0));
        for time in 0..3 {
            let rho = m.rho(&x, time).unwrap();
            let e = w.conditional(&t, &x, time);
            for (r, v) in rho.values.iter().zip(&e.values) {
                assert!(r + v >= -1e-12);
            }
        }
    }
}

#[test]
fn primal_dual_agree_on_binomial_trees() {
    for periods in 1..=4 {
        let t = multi_period_binomial(periods);
        for spec in [RiskMeasureSpec::worst_case(), RiskMeasureSpec::cvar(0.5), RiskMeasureSpec::cvar(0.7)] {
            let m = drm(&t, &spec);
            for strike in [0.5, 1.0, 2.0] {
                let h = Payoff::call(&t, 0, strike);
                let p = backward_price(&m, &h).unwrap();
                let d = dual_price(&m, &h).unwrap();
                for ix in 0..t.len() {
                    assert!((p.nodes[ix].price - d.nodes[ix].value).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn ftap_on_reference_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let t = multi_period_binomial(2);
    let r = verify_ftap(&drm(&t, &RiskMeasureSpec::cvar(0.7)), 20, &mut rng).unwrap();
    assert!(r.na && r.consistent(), "{:?}", r.legs);
    assert!(r.legs.iter().all(|l| l.status == LegStatus::Pass));

    let t = one_period(1.0, &[2.0, 3.0]);
    let r = verify_ftap(&wc(&t), 5, &mut rng).unwrap();
    assert!(!r.na && !r.polytopes_nonempty && !r.ngd_everywhere() && r.consistent());

    // deterministic non-constant prices: arbitrage in one direction
    let t = deterministic(&[1.0, 1.2]);
    let r = verify_ftap(&wc(&t), 5, &mut rng).unwrap();
    assert!(!r.na && r.consistent());
    let t = deterministic(&[1.0, 1.0]);
    let r = verify_ftap(&wc(&t), 5, &mut rng).unwrap();
    assert!(r.na && r.consistent());
}

#[test]
fn aip_without_srn_is_reported_consistently() {
    // AIP holds but SRN fails: polytopes are nonempty and NGD holds, while
    // NA is false; only the mixing leg ties to NA.
    let t = binomial();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let r = verify_ftap(&drm(&t, &RiskMeasureSpec::cvar(0.75)), 5, &mut rng).unwrap();
    assert!(!r.na && r.aip_everywhere && r.polytopes_nonempty && r.ngd_everywhere());
    assert!(!r.mixing_interior && r.kernels_strictly_positive);
    assert!(r.consistent());
}
