use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixtures::{binomial, multi_period_binomial, one_period, trinomial};
use crate::risk::RiskMeasureSpec;

fn drm<'t>(tree: &'t ScenarioTree, spec: &RiskMeasureSpec) -> DynamicRiskMeasure<'t> {
    DynamicRiskMeasure::build(tree, spec, Settings::default()).unwrap()
}

/// Minimum of a one-dimensional `g` on a grid over `[-10, 10]`.
fn grid_min(g: &GFunction) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for k in -100_000..=100_000 {
        let x = k as f64 * 1e-4;
        let v = g.eval(&[x]);
        if v < best.0 {
            best = (v, x);
        }
    }
    best
}

#[test]
fn binomial_call_g_pieces() {
    let t = binomial();
    let m = drm(&t, &RiskMeasureSpec::worst_case());
    let g = build_g(&m, t.root(), &[1.0, 0.0]).unwrap();
    let mut pieces = g.pieces.clone();
    pieces.sort_by(|a, b| a.0[0].partial_cmp(&b.0[0]).unwrap());
    assert_eq!(pieces, vec![(vec![-1.0], 1.0), (vec![0.5], 0.0)]);
    for x in [-3.0, -0.2, 0.0, 0.7, 4.0] {
        let direct = x * 1.0 + m.step(t.root()).rho(&[2.0 * x - 1.0, 0.5 * x]);
        assert!((g.eval(&[x]) - direct).abs() < 1e-14);
    }
}

#[test]
fn binomial_call_matches_grid_search() {
    let t = binomial();
    let m = drm(&t, &RiskMeasureSpec::worst_case());
    let g = build_g(&m, t.root(), &[1.0, 0.0]).unwrap();
    let (gv, gx) = grid_min(&g);
    let GMinimum::Attained { value, argmin, .. } = minimize_g(&g, &Settings::default()).unwrap() else {
        panic!()
    };
    assert!((value - gv).abs() < 1e-4 && (argmin[0] - gx).abs() < 1e-3);
    let r = backward_price(&m, &Payoff::call(&t, 0, 1.0)).unwrap();
    let root = &r.nodes[t.root()];
    assert!((root.price - 1.0 / 3.0).abs() <= 1e-9);
    assert!((root.theta.as_ref().unwrap()[0] - 2.0 / 3.0).abs() <= 1e-9);
    assert!(root.attained);
}

#[test]
fn minimize_g_edge_cases() {
    let s = Settings::default();
    let g = GFunction { node: 0, pieces: vec![(vec![-1.0], 0.0), (vec![-2.0], 0.0)] };
    match minimize_g(&g, &s).unwrap() {
        GMinimum::MinusInfinity { ray } => assert!(ray[0] > 0.0),
        other => panic!("{other:?}"),
    }
    let g = GFunction { node: 0, pieces: vec![(vec![0.0], 2.5)] };
    assert_eq!(minimize_g(&g, &s).unwrap().value(), 2.5);
}

#[test]
fn zero_and_constant_claims() {
    let t = multi_period_binomial(2);
    let m = drm(&t, &RiskMeasureSpec::cvar(0.6));
    let zero = Payoff::new(NodeFunction::constant(&t, 2, 0.0));
    let r = backward_price(&m, &zero).unwrap();
    assert!(r.nodes.iter().all(|n| n.price.abs() < 1e-12 && n.attained));
    let c = Payoff::new(NodeFunction::constant(&t, 2, 1.75));
    let r = backward_price(&m, &c).unwrap();
    assert!(r.nodes.iter().all(|n| (n.price - 1.75).abs() < 1e-12));
    for time in 0..2 {
        let d = direct_price(&m, &c, time).unwrap();
        assert!(d.values.iter().all(|v| (v - 1.75).abs() < 1e-9));
    }
}

#[test]
fn constant_shift_shifts_g() {
    let t = trinomial();
    let m = drm(&t, &RiskMeasureSpec::cvar(0.5));
    let g0 = build_g(&m, t.root(), &[0.0; 3]).unwrap();
    let gc = build_g(&m, t.root(), &[2.0; 3]).unwrap();
    for x in [-1.0, 0.0, 0.3, 5.0] {
        assert!((gc.eval(&[x]) - g0.eval(&[x]) - 2.0).abs() < 1e-12);
    }
    assert_eq!(g0.eval(&[0.0]), 0.0);
}

/// Superreplication oracle for one period, `d = 1`: the maximum of `E_q h`
/// over martingale kernels, scanning all two-point kernels (the extreme
/// points of the kernel polytope).
fn martingale_max(delta: &[f64], h: &[f64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut offer = |v: f64| best = Some(best.map_or(v, |b: f64| b.max(v)));
    for i in 0..delta.len() {
        if delta[i] == 0.0 {
            offer(h[i]);
        }
        for j in 0..delta.len() {
            if delta[i] > 0.0 && delta[j] < 0.0 {
                let a = -delta[j] / (delta[i] - delta[j]);
                offer(a * h[i] + (1.0 - a) * h[j]);
            }
        }
    }
    best
}

#[test]
fn trinomial_worst_case_price() {
    let t = trinomial();
    let m = drm(&t, &RiskMeasureSpec::worst_case());
    let h = Payoff::call(&t, 0, 1.0);
    let r = backward_price(&m, &h).unwrap();
    let oracle = martingale_max(&[1.0, 0.0, -0.5], &h.values.values).unwrap();
    assert!((oracle - 1.0 / 3.0).abs() < 1e-15);
    assert!((r.root_price(&t) - oracle).abs() < 1e-9);
}

#[test]
fn trinomial_cvar_point_nine_is_arbitrage() {
    // Every vertex of the CVaR(0.9) box has a positive mean increment, so
    // the zero claim can be hedged at any negative price.
    let t = trinomial();
    let m = drm(&t, &RiskMeasureSpec::cvar(0.9));
    let delta = t.delta_s(t.root()).unwrap();
    for v in moments(m.step(t.root()), &delta) {
        assert!(v[0] > 0.07);
    }
    let r = backward_price(&m, &Payoff::call(&t, 0, 1.0)).unwrap();
    assert_eq!(r.root_price(&t), f64::NEG_INFINITY);
    assert!(!r.nodes[t.root()].attained);
    assert_eq!(r.nodes[t.root()].status, Some(LpStatus::Unbounded));
}

#[test]
fn worst_case_matches_superreplication_on_random_one_period_markets() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let m = rng.gen_range(2..=5);
        let prices: Vec<f64> = (0..m).map(|_| (rng.gen_range(0..=8) as f64) * 0.25).collect();
        let t = one_period(1.0, &prices);
        let delta: Vec<f64> = prices.iter().map(|p| p - 1.0).collect();
        let h = Payoff::new(NodeFunction::from_fn(&t, 1, |_| rng.gen_range(0.0..2.0)));
        let r = backward_price(&drm(&t, &RiskMeasureSpec::worst_case()), &h).unwrap();
        match martingale_max(&delta, &h.values.values) {
            Some(v) => assert!((r.root_price(&t) - v).abs() < 1e-8, "{prices:?}"),
            None => assert_eq!(r.root_price(&t), f64::NEG_INFINITY),
        }
    }
}

#[test]
fn minus_infinity_propagates() {
    let t = crate::fixtures::deterministic(&[1.0, 1.0, 2.0]);
    let m = drm(&t, &RiskMeasureSpec::worst_case());
    let h = Payoff::new(NodeFunction::constant(&t, 2, 0.0));
    let r = backward_price(&m, &h).unwrap();
    assert_eq!(r.nodes[t.ix(1).unwrap()].status, Some(LpStatus::Unbounded));
    assert_eq!(r.nodes[t.ix(0).unwrap()].status, None);
    assert_eq!(r.root_price(&t), f64::NEG_INFINITY);
    assert_eq!(direct_price(&m, &h, 0).unwrap().values, vec![f64::NEG_INFINITY]);
}

#[test]
fn maturity_must_match_horizon() {
    let t = multi_period_binomial(2);
    let m = drm(&t, &RiskMeasureSpec::worst_case());
    let h = Payoff::new(NodeFunction::constant(&t, 1, 0.0));
    assert_eq!(
        backward_price(&m, &h).unwrap_err(),
        Error::MaturityMismatch { expected: 2, found: 1 }
    );
}

#[test]
fn direct_equals_backward_on_binomial_trees() {
    for periods in 1..=3 {
        let t = multi_period_binomial(periods);
        for spec in [RiskMeasureSpec::worst_case(), RiskMeasureSpec::cvar(0.7)] {
            let m = drm(&t, &spec);
            let h = Payoff::call(&t, 0, 1.0);
            let r = backward_price(&m, &h).unwrap();
            for time in 0..periods {
                let d = direct_price(&m, &h, time).unwrap();
                let b = r.prices(&t, time);
                for (x, y) in d.values.iter().zip(&b.values) {
                    assert!((x - y).abs() < 1e-8, "{periods} {time}: {x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn price_bounds_binomial() {
    let t = binomial();
    let m = drm(&t, &RiskMeasureSpec::worst_case());
    let r = backward_price(&m, &Payoff::call(&t, 0, 1.0)).unwrap();
    let b = verify_price_bounds(&m, &r);
    assert_eq!(b.checked, 1);
    assert!(b.violations.is_empty());
    // 1 ≥ 1/3 ≥ 0
    assert!((b.min_slack - 1.0 / 3.0).abs() < 1e-9);
}

#[test]
fn lines_on_flat_and_binomial_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let radii = [1.0, -1.0, 10.0, -10.0, 100.0, -100.0];
    let t = one_period(1.0, &[1.0, 1.0]);
    let m = drm(&t, &RiskMeasureSpec::worst_case());
    let r = verify_line_behavior(&m, t.root(), &[0.3, 0.9], &radii, 20, &mut rng).unwrap();
    assert!(r.neutral_checks > 0 && r.coercive_checks == 0 && r.passed(1e-9));

    let t = binomial();
    let m = drm(&t, &RiskMeasureSpec::worst_case());
    let r = verify_line_behavior(&m, t.root(), &[1.0, 0.0], &radii, 20, &mut rng).unwrap();
    assert_eq!(r.neutral_checks, 0);
    assert!(r.coercive_checks > 0 && r.passed(1e-9));
    // g(±10) against 0.5·10 − ρ(h)
    let g = build_g(&m, t.root(), &[1.0, 0.0]).unwrap();
    assert!(g.eval(&[10.0]) >= 5.0 - 0.0 - 1e-12);
    assert!(g.eval(&[-10.0]) >= 5.0 - 0.0 - 1e-12);

    // one-sided: ΔS ∈ {0, −0.5}
    let t = one_period(1.0, &[1.0, 0.5]);
    let m = drm(&t, &RiskMeasureSpec::worst_case());
    let r = verify_line_behavior(&m, t.root(), &[0.0, 0.0], &radii, 20, &mut rng).unwrap();
    assert_eq!(r.skipped, 20);
}

#[test]
fn risk_neutral_lines_span_null_space() {
    let lines = risk_neutral_lines(&[vec![1.0, -1.0, 0.0], vec![2.0, -2.0, 0.0]], 3);
    assert_eq!(lines.len(), 2);
    for z in &lines {
        assert!((z[0] - z[1]).abs() < 1e-12);
    }
    assert!(risk_neutral_lines(&[vec![1.0], vec![-0.5]], 1).is_empty());
}

#[test]
fn direct_equals_backward_on_generated_models() {
    // includes ill-conditioned direct LPs that once broke phase one
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..80 {
        let m = crate::generate::random_na_model(&mut rng, &crate::generate::TreeShape::default());
        let d = drm(&m.tree, &m.risk);
        let h = m.payoff.as_ref().unwrap();
        let r = backward_price(&d, h).unwrap();
        for time in 0..m.tree.horizon() {
            let dp = direct_price(&d, h, time).unwrap();
            for (x, y) in dp.values.iter().zip(&r.prices(&m.tree, time).values) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }
}
