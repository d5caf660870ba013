use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use riskhedge::arbitrage::check_na;
use riskhedge::duality::{dual_price, extract_witness_measure, verify_ftap, LegStatus};
use riskhedge::model::Model;
use riskhedge::pricing::{backward_price, direct_price, verify_price_bounds};
use riskhedge::risk::{validate_acceptance_cone, DynamicRiskMeasure, LocalMeasure, MeasureKind};
use riskhedge::tree::{Payoff, ScenarioTree};
use riskhedge::{Error, Result, Settings};

use crate::report::{cell, num, nums, opt_nums};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NO_NA: u8 = 3;
pub const EXIT_MINUS_INFINITY: u8 = 4;
pub const EXIT_INCONSISTENT: u8 = 5;

/// Largest tolerated gap between backward and direct prices.
pub const DIRECT_GAP_TOL: f64 = 1e-8;
/// Largest tolerated gap between primal and dual root prices.
pub const DUAL_GAP_TOL: f64 = 1e-7;
const FTAP_SEED: u64 = 0x5eed;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoNa => EXIT_NO_NA,
        Error::NumericalFailure(_) | Error::MalformedProblem(_) => EXIT_INCONSISTENT,
        _ => EXIT_VALIDATION,
    }
}

/// Nodes in `(time, id)` order.
fn ordered(tree: &ScenarioTree) -> Vec<usize> {
    let mut ix: Vec<usize> = (0..tree.len()).collect();
    ix.sort_by_key(|&i| (tree.node(i).time, tree.node(i).id));
    ix
}

/// Invariant problems that need more than the schema: cone generators and
/// the dual sets themselves.
pub fn semantic_problems(model: &Model, settings: &Settings) -> Vec<String> {
    let tree = &model.tree;
    let mut problems = Vec::new();
    for ix in tree.internal_nodes() {
        let id = tree.node(ix).id;
        if let Ok(LocalMeasure::Cone { generators }) = model.risk.local(id) {
            match validate_acceptance_cone(&generators, settings) {
                Ok(r) if !r.is_valid() => problems.push(format!("node {id}: {}", r.summary())),
                Err(e) => problems.push(format!("node {id}: {e}")),
                Ok(_) => {}
            }
        }
    }
    if problems.is_empty() {
        if let Err(e) = DynamicRiskMeasure::build(tree, &model.risk, *settings) {
            problems.push(e.to_string());
        }
    }
    problems
}

pub fn validate(model: &Model) -> (Value, u8) {
    let tree = &model.tree;
    let kind = match &model.risk.kind {
        MeasureKind::WorstCase => "worst_case",
        MeasureKind::Cvar { .. } => "cvar",
        MeasureKind::Kernels { .. } => "kernels",
        MeasureKind::Cone { .. } => "cone",
    };
    let payload = json!({
        "status": if model.payoff.is_some() { "ok" } else { "ok, no payoff" },
        "assets": tree.assets(),
        "horizon": tree.horizon(),
        "nodes": tree.len(),
        "internal_nodes": tree.internal_nodes().count(),
        "risk_measure": kind,
        "overrides": model.risk.overrides.len(),
        "payoff_time": model.payoff.as_ref().map(|p| p.maturity),
    });
    (payload, EXIT_OK)
}

pub fn invalid(errors: &[String]) -> Value {
    json!({ "status": "invalid", "errors": errors })
}

pub fn check_na_cmd(drm: &DynamicRiskMeasure, time: Option<usize>) -> Result<(Value, u8)> {
    let tree = drm.tree();
    if let Some(t) = time {
        if t >= tree.horizon() {
            return Err(Error::Validation(vec![format!(
                "--time {t} must be below the horizon {}",
                tree.horizon()
            )]));
        }
    }
    let report = check_na(drm, time)?;
    let verdicts: Vec<Value> = report
        .verdicts
        .iter()
        .map(|v| {
            json!({
                "node": v.node,
                "time": v.time,
                "aip": v.aip,
                "srn": v.srn,
                "na": v.na,
                "kernel": opt_nums(v.kernel.as_ref()),
                "aip_direction": opt_nums(v.aip_direction.as_ref()),
                "srn_direction": opt_nums(v.srn_direction.as_ref()),
            })
        })
        .collect();
    let payload = json!({
        "na": report.holds,
        "aip_everywhere": report.aip_everywhere(),
        "time": time,
        "verdicts": verdicts,
    });
    Ok((payload, if report.holds { EXIT_OK } else { EXIT_NO_NA }))
}

fn payoff(model: &Model) -> Result<&Payoff> {
    model
        .payoff
        .as_ref()
        .ok_or_else(|| Error::Validation(vec!["model has no payoff".into()]))
}

pub fn price_cmd(model: &Model, drm: &DynamicRiskMeasure, direct: bool, csv: Option<&Path>) -> Result<(Value, u8)> {
    let tree = &model.tree;
    let h = payoff(model)?;
    let r = backward_price(drm, h)?;
    let order = ordered(tree);
    let nodes: Vec<Value> = order
        .iter()
        .map(|&ix| {
            let n = &r.nodes[ix];
            json!({
                "node": n.node,
                "time": n.time,
                "price": num(n.price),
                "attained": n.attained,
                "theta": opt_nums(n.theta.as_ref()),
                "status": n.status.map(|s| format!("{s:?}").to_lowercase()),
                "degenerate": n.degenerate,
            })
        })
        .collect();
    let bounds = verify_price_bounds(drm, &r);
    let mut payload = json!({
        "root_price": num(r.root_price(tree)),
        "minus_infinity": r.has_minus_infinity(),
        "nodes": nodes,
        "bounds": {
            "checked": bounds.checked,
            "min_slack": num(if bounds.checked == 0 { 0.0 } else { bounds.min_slack }),
            "violations": bounds.violations.iter().map(|v| v.node).collect::<Vec<_>>(),
        },
    });
    let mut code = if r.has_minus_infinity() { EXIT_MINUS_INFINITY } else { EXIT_OK };
    if direct {
        let mut gap = 0.0f64;
        let mut slices = Vec::new();
        for t in 0..tree.horizon() {
            let d = direct_price(drm, h, t)?;
            let b = r.prices(tree, t);
            let mut entries = Vec::new();
            for ((&ix, &x), &y) in tree.slice(t).iter().zip(&d.values).zip(&b.values) {
                if !(x == f64::NEG_INFINITY && y == f64::NEG_INFINITY) {
                    gap = gap.max((x - y).abs());
                }
                entries.push((tree.node(ix).id, x));
            }
            entries.sort_by_key(|e| e.0);
            slices.push(json!({
                "time": t,
                "prices": entries.iter().map(|(id, x)| json!({ "node": id, "price": num(*x) })).collect::<Vec<_>>(),
            }));
        }
        let agrees = gap <= DIRECT_GAP_TOL;
        payload["direct"] = json!({ "slices": slices, "max_gap": num(gap), "agrees": agrees });
        if !agrees {
            code = EXIT_INCONSISTENT;
        }
    }
    if let Some(path) = csv {
        write_csv(path, tree, &order, &r.nodes).map_err(|e| Error::Validation(vec![format!("csv: {e}")]))?;
    }
    Ok((payload, code))
}

fn write_csv(
    path: &Path,
    tree: &ScenarioTree,
    order: &[usize],
    nodes: &[riskhedge::pricing::NodePrice],
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    let d = tree.asset_count();
    let mut header = vec!["node_id".to_string(), "time".into(), "price".into(), "attained".into()];
    header.extend((1..=d).map(|k| format!("theta_{k}")));
    w.write_record(&header)?;
    for &ix in order {
        let n = &nodes[ix];
        let mut row = vec![n.node.to_string(), n.time.to_string(), cell(n.price), n.attained.to_string()];
        match &n.theta {
            Some(theta) => row.extend(theta.iter().map(|&x| cell(x))),
            None => row.extend(std::iter::repeat(String::new()).take(d)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn dual_price_cmd(model: &Model, drm: &DynamicRiskMeasure) -> Result<(Value, u8)> {
    let tree = &model.tree;
    let h = payoff(model)?;
    let na = check_na(drm, None)?;
    if !na.holds {
        let failing: Vec<_> = na.verdicts.iter().filter(|v| !v.na).map(|v| v.node).collect();
        return Ok((json!({ "na": false, "failing_nodes": failing }), EXIT_NO_NA));
    }
    let d = dual_price(drm, h)?;
    let w = extract_witness_measure(drm)?;
    let primal = backward_price(drm, h)?.root_price(tree);
    let dual = d.root_value(tree);
    let gap = (primal - dual).abs();
    let order = ordered(tree);
    let nodes: Vec<Value> = order
        .iter()
        .map(|&ix| {
            let n = &d.nodes[ix];
            json!({
                "node": n.node,
                "time": n.time,
                "value": num(n.value),
                "kernel": opt_nums(n.kernel.as_ref()),
                "strictly_positive": n.strictly_positive,
                "perturbation_gap": n.perturbation_gap.map(num),
            })
        })
        .collect();
    let kernels: Vec<Value> = order
        .iter()
        .filter_map(|&ix| {
            w.kernels[ix]
                .as_ref()
                .map(|k| json!({ "node": tree.node(ix).id, "kernel": nums(k) }))
        })
        .collect();
    let mut leaves: Vec<(u64, f64)> = tree
        .slice(w.leaf_weights.time)
        .iter()
        .zip(&w.leaf_weights.values)
        .map(|(&ix, &p)| (tree.node(ix).id, p))
        .collect();
    leaves.sort_by_key(|l| l.0);
    let payload = json!({
        "na": true,
        "root_value": num(dual),
        "primal_root_price": num(primal),
        "gap": num(gap),
        "nodes": nodes,
        "witness": {
            "strictly_positive": w.strictly_positive,
            "kernels": kernels,
            "leaf_weights": leaves.iter().map(|(id, p)| json!({ "node": id, "weight": num(*p) })).collect::<Vec<_>>(),
        },
    });
    Ok((payload, if gap <= DUAL_GAP_TOL { EXIT_OK } else { EXIT_INCONSISTENT }))
}

pub fn ftap_cmd(drm: &DynamicRiskMeasure, samples: usize) -> Result<(Value, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(FTAP_SEED);
    let r = verify_ftap(drm, samples, &mut rng)?;
    let legs: Vec<Value> = r
        .legs
        .iter()
        .map(|l| {
            let status = match l.status {
                LegStatus::Pass => "pass",
                LegStatus::Fail => "fail",
                LegStatus::Skipped => "skipped",
            };
            json!({ "name": l.name, "status": status, "detail": l.detail })
        })
        .collect();
    let payload = json!({
        "na": r.na,
        "aip_everywhere": r.aip_everywhere,
        "polytopes_nonempty": r.polytopes_nonempty,
        "kernels_strictly_positive": r.kernels_strictly_positive,
        "mixing_interior": r.mixing_interior,
        "ngd": r.ngd,
        "consistent": r.consistent(),
        "samples": samples,
        "legs": legs,
    });
    Ok((payload, if r.consistent() { EXIT_OK } else { EXIT_INCONSISTENT }))
}
