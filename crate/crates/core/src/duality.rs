//! Martingale kernels dominated by the risk measure, the dual price and the
//! cross-checks between the primal and dual descriptions.
//!
//! A kernel `q` at a node satisfies `ρ(X) ≥ −E_q X` for every `X` exactly
//! when `q ∈ conv D(node)`, so the relevant set is
//! `{q = Σ λ_k q_k : λ ∈ simplex, Σ q_j ΔS_j = 0}` with `q_k` the dual
//! vertices. Measures are chosen node by node (rectangular family).

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::arbitrage::{check_na, check_ngd};
use crate::error::{Error, Result};
use crate::lp::{self, LpOutcome, LpProblem};
use crate::pricing::{moments, risk_neutral_lines};
use crate::risk::{expectation, DynamicRiskMeasure};
use crate::tree::{NodeFunction, NodeId, Payoff, ScenarioTree};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleKernelPolytope {
    #[serde(skip)]
    pub node: usize,
    pub vertices: Vec<Vec<f64>>,
    pub moments: Vec<Vec<f64>>,
    /// Largest `ε` with a kernel `q ≥ ε` in the polytope; `None` if empty.
    pub interior_radius: Option<f64>,
    /// Kernel attaining `interior_radius`.
    pub interior_kernel: Option<Vec<f64>>,
    /// Largest `ε` with mixing weights `λ ≥ ε`; positive exactly when the
    /// polytope meets the relative interior of `conv D(node)`.
    pub mixing_radius: Option<f64>,
}

impl MartingaleKernelPolytope {
    pub fn is_empty(&self) -> bool {
        self.interior_radius.is_none()
    }

    /// Every child gets positive weight from some dual vertex.
    pub fn covers_children(&self) -> bool {
        (0..self.vertices[0].len()).all(|j| self.vertices.iter().any(|q| q[j] > 0.0))
    }

    fn mix(&self, lambda: &[f64]) -> Vec<f64> {
        let m = self.vertices[0].len();
        (0..m)
            .map(|j| self.vertices.iter().zip(lambda).map(|(q, l)| l * q[j]).sum())
            .collect()
    }

    /// `Σλ = 1`, `Σ λ_k v_k = 0` on the first `k` variables of `p`.
    fn constrain(&self, p: &mut LpProblem) {
        let k = self.vertices.len();
        let n = p.num_vars();
        let mut row = vec![0.0; n];
        row[..k].fill(1.0);
        p.add_eq(row, 1.0);
        for a in 0..self.moments[0].len() {
            let mut row = vec![0.0; n];
            for (r, v) in row.iter_mut().zip(&self.moments) {
                *r = v[a];
            }
            p.add_eq(row, 0.0);
        }
    }
}

pub fn build_polytope(drm: &DynamicRiskMeasure, ix: usize) -> Result<MartingaleKernelPolytope> {
    let step = drm.step(ix);
    let delta = drm.tree().delta_s(ix)?;
    let mut poly = MartingaleKernelPolytope {
        node: ix,
        vertices: step.dual_vertices.clone(),
        moments: moments(step, &delta),
        interior_radius: None,
        interior_kernel: None,
        mixing_radius: None,
    };
    let k = poly.vertices.len();
    let m = delta.len();
    let opts = drm.settings().lp();

    // variables λ_1..λ_k, ε; maximize ε with Σ_k λ_k q_k[j] ≥ ε
    let mut p = LpProblem::new(k + 1);
    p.set_objective(k, -1.0);
    p.set_bounds(k, 0.0, 1.0);
    poly.constrain(&mut p);
    for j in 0..m {
        let mut row: Vec<f64> = poly.vertices.iter().map(|q| -q[j]).collect();
        row.push(1.0);
        p.add_le(row, 0.0);
    }
    if let LpOutcome::Optimal(s) = lp::solve(&p, &opts)? {
        poly.interior_radius = Some(-s.value);
        poly.interior_kernel = Some(poly.mix(&s.primal_point[..k]));
    } else {
        return Ok(poly);
    }

    let mut p = LpProblem::new(k + 1);
    p.set_objective(k, -1.0);
    p.set_bounds(k, 0.0, 1.0);
    poly.constrain(&mut p);
    for j in 0..k {
        let mut row = vec![0.0; k + 1];
        row[j] = -1.0;
        row[k] = 1.0;
        p.add_le(row, 0.0);
    }
    poly.mixing_radius = lp::solve(&p, &opts)?.value().map(|v| -v);
    Ok(poly)
}

/// Polytopes at every non-terminal node, indexed by arena index.
pub fn build_polytopes(drm: &DynamicRiskMeasure) -> Result<Vec<Option<MartingaleKernelPolytope>>> {
    let tree = drm.tree();
    let internal: Vec<usize> = tree.internal_nodes().collect();
    let built = drm.settings().exec.try_map(&internal, |&ix| build_polytope(drm, ix))?;
    let mut out = vec![None; tree.len()];
    for p in built {
        let ix = p.node;
        out[ix] = Some(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualNode {
    pub node: NodeId,
    pub time: usize,
    pub value: f64,
    pub kernel: Option<Vec<f64>>,
    pub strictly_positive: bool,
    /// `|E_{q_ε} V − E_q V|` for the kernel mixed with weight `ε` towards
    /// the interior kernel, when the maximizer is on the boundary.
    pub perturbation_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualPriceResult {
    /// Indexed by arena index.
    pub nodes: Vec<DualNode>,
}

impl DualPriceResult {
    pub fn values(&self, tree: &ScenarioTree, t: usize) -> NodeFunction {
        NodeFunction::from_fn(tree, t, |ix| self.nodes[ix].value)
    }

    pub fn root_value(&self, tree: &ScenarioTree) -> f64 {
        self.nodes[tree.root()].value
    }
}

/// Weight moved towards the interior kernel in the perturbation check.
pub const PERTURBATION: f64 = 1e-3;

/// `V(leaf) = h`, `V(node) = max Σ q_j V(child_j)` over the node's
/// martingale kernel polytope. Requires NA.
pub fn dual_price(drm: &DynamicRiskMeasure, h: &Payoff) -> Result<DualPriceResult> {
    let tree = drm.tree();
    if h.maturity != tree.horizon() {
        return Err(Error::MaturityMismatch {
            expected: tree.horizon(),
            found: h.maturity,
        });
    }
    if !check_na(drm, None)?.holds {
        return Err(Error::NoNa);
    }
    let polys = build_polytopes(drm)?;
    dual_dp(drm, &polys, &h.values)
}

fn dual_dp(
    drm: &DynamicRiskMeasure,
    polys: &[Option<MartingaleKernelPolytope>],
    terminal: &NodeFunction,
) -> Result<DualPriceResult> {
    let tree = drm.tree();
    let tol = drm.settings().tol;
    let mut nodes: Vec<Option<DualNode>> = vec![None; tree.len()];
    let horizon = terminal.time;
    for &ix in tree.slice(horizon) {
        nodes[ix] = Some(DualNode {
            node: tree.node(ix).id,
            time: horizon,
            value: *terminal.at(tree, ix),
            kernel: None,
            strictly_positive: true,
            perturbation_gap: None,
        });
    }
    for t in (0..horizon).rev() {
        let solved = drm.settings().exec.try_map(tree.slice(t), |&ix| {
            let poly = polys[ix].as_ref().expect("polytope at every non-terminal node");
            let next: Vec<f64> = tree
                .node(ix)
                .children
                .iter()
                .map(|&c| nodes[c].as_ref().expect("child solved").value)
                .collect();
            let k = poly.vertices.len();
            let mut p = LpProblem::new(k).minimize(poly.vertices.iter().map(|q| -expectation(q, &next)).collect());
            poly.constrain(&mut p);
            let s = match lp::solve(&p, &drm.settings().lp())? {
                LpOutcome::Optimal(s) => s,
                _ => return Err(Error::NoNa),
            };
            let kernel = poly.mix(&s.primal_point);
            let value = expectation(&kernel, &next);
            let strictly_positive = kernel.iter().all(|w| *w > tol);
            let perturbation_gap = match (&poly.interior_kernel, strictly_positive) {
                (Some(inner), false) => {
                    let mixed: Vec<f64> = kernel
                        .iter()
                        .zip(inner)
                        .map(|(a, b)| (1.0 - PERTURBATION) * a + PERTURBATION * b)
                        .collect();
                    Some((expectation(&mixed, &next) - value).abs())
                }
                _ => None,
            };
            Ok(DualNode {
                node: tree.node(ix).id,
                time: t,
                value,
                kernel: Some(kernel),
                strictly_positive,
                perturbation_gap,
            })
        })?;
        for (&ix, n) in tree.slice(t).iter().zip(solved) {
            nodes[ix] = Some(n);
        }
    }
    Ok(DualPriceResult {
        nodes: nodes.into_iter().map(|n| n.expect("every node solved")).collect(),
    })
}

/// Martingale measure built from one kernel per non-terminal node.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleMeasure {
    /// Indexed by arena index; `None` at leaves.
    pub kernels: Vec<Option<Vec<f64>>>,
    pub leaf_weights: NodeFunction,
    pub strictly_positive: bool,
}

impl MartingaleMeasure {
    pub fn kernel_map(&self, tree: &ScenarioTree) -> BTreeMap<NodeId, Vec<f64>> {
        self.kernels
            .iter()
            .enumerate()
            .filter_map(|(ix, k)| k.as_ref().map(|k| (tree.node(ix).id, k.clone())))
            .collect()
    }

    /// `E_Q(X | F_t)` for `X` at time `x.time ≥ t`.
    pub fn conditional(&self, tree: &ScenarioTree, x: &NodeFunction, t: usize) -> NodeFunction {
        let mut v = x.clone();
        for s in (t..x.time).rev() {
            let prev = v;
            v = NodeFunction::from_fn(tree, s, |ix| {
                let vals: Vec<f64> = tree.node(ix).children.iter().map(|&c| *prev.at(tree, c)).collect();
                expectation(self.kernels[ix].as_ref().expect("kernel"), &vals)
            });
        }
        v
    }
}

/// Maximum martingale deviation tolerated in the witness.
pub const MARTINGALE_TOL: f64 = 1e-10;

/// Kernel of maximal interior radius at every node, assembled into a
/// measure on the leaves. Requires NA.
pub fn extract_witness_measure(drm: &DynamicRiskMeasure) -> Result<MartingaleMeasure> {
    if !check_na(drm, None)?.holds {
        return Err(Error::NoNa);
    }
    let polys = build_polytopes(drm)?;
    witness_from(drm, &polys)
}

fn witness_from(drm: &DynamicRiskMeasure, polys: &[Option<MartingaleKernelPolytope>]) -> Result<MartingaleMeasure> {
    let tree = drm.tree();
    let mut kernels = vec![None; tree.len()];
    for ix in tree.internal_nodes() {
        let poly = polys[ix].as_ref().expect("polytope");
        let q = poly.interior_kernel.clone().ok_or(Error::NoNa)?;
        let delta = tree.delta_s(ix)?;
        for a in 0..tree.asset_count() {
            let drift: f64 = q.iter().zip(&delta).map(|(w, ds)| w * ds[a]).sum();
            if drift.abs() > MARTINGALE_TOL * (1.0 + tree.node(ix).price[a]) {
                return Err(Error::NumericalFailure(format!(
                    "witness kernel at node {} has drift {drift}",
                    tree.node(ix).id
                )));
            }
        }
        kernels[ix] = Some(q);
    }
    let leaf_weights = NodeFunction::from_fn(tree, tree.horizon(), |leaf| {
        let mut w = 1.0;
        let mut cur = leaf;
        while let Some(parent) = tree.node(cur).parent {
            let j = tree.node(parent).children.iter().position(|&c| c == cur).expect("child");
            w *= kernels[parent].as_ref().map(|k: &Vec<f64>| k[j]).expect("kernel");
            cur = parent;
        }
        w
    });
    let tol = drm.settings().tol;
    let strictly_positive = kernels.iter().flatten().all(|k| k.iter().all(|w| *w > tol));
    Ok(MartingaleMeasure {
        kernels,
        leaf_weights,
        strictly_positive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LegStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Leg {
    pub name: &'static str,
    pub status: LegStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FtapReport {
    pub na: bool,
    pub aip_everywhere: bool,
    pub polytopes_nonempty: bool,
    pub kernels_strictly_positive: bool,
    pub mixing_interior: bool,
    pub ngd: Vec<bool>,
    pub legs: Vec<Leg>,
}

impl FtapReport {
    pub fn consistent(&self) -> bool {
        self.legs.iter().all(|l| l.status != LegStatus::Fail)
    }

    pub fn ngd_everywhere(&self) -> bool {
        self.ngd.iter().all(|b| *b)
    }
}

fn leg(name: &'static str, ok: bool, detail: String) -> Leg {
    Leg {
        name,
        status: if ok { LegStatus::Pass } else { LegStatus::Fail },
        detail,
    }
}

fn skipped(name: &'static str, detail: &str) -> Leg {
    Leg {
        name,
        status: LegStatus::Skipped,
        detail: detail.into(),
    }
}

/// Checks the equivalent characterizations of NA on one model, plus
/// sampled consequences of NA for attainable claims and the witness
/// measure.
pub fn verify_ftap(drm: &DynamicRiskMeasure, samples: usize, rng: &mut impl Rng) -> Result<FtapReport> {
    let tree = drm.tree();
    let tol = drm.settings().tol;
    let na = check_na(drm, None)?;
    let polys = build_polytopes(drm)?;
    let internal: Vec<&MartingaleKernelPolytope> = polys.iter().flatten().collect();
    let nonempty = internal.iter().all(|p| !p.is_empty());
    let positive = internal.iter().all(|p| p.interior_radius.is_some_and(|r| r > tol));
    let mixing = internal.iter().all(|p| p.mixing_radius.is_some_and(|r| r > tol));
    let covered = internal.iter().all(|p| p.covers_children());
    let ngd = (0..tree.horizon())
        .map(|t| check_ngd(drm, t).map(|r| r.holds))
        .collect::<Result<Vec<bool>>>()?;
    let ngd_all = ngd.iter().all(|b| *b);
    let aip_all = na.aip_everywhere();

    let mut legs = vec![
        leg(
            "na_iff_interior_mixing",
            na.holds == mixing,
            format!("NA {} / strictly positive mixing at every node {}", na.holds, mixing),
        ),
        leg(
            "aip_iff_nonempty_polytopes",
            aip_all == nonempty,
            format!("AIP everywhere {aip_all} / all polytopes nonempty {nonempty}"),
        ),
        leg(
            "ngd_iff_nonempty_polytopes",
            ngd_all == nonempty,
            format!("NGD at every time {ngd_all} / all polytopes nonempty {nonempty}"),
        ),
        leg("na_implies_ngd", !na.holds || ngd_all, format!("NA {} / NGD {ngd_all}", na.holds)),
    ];
    if covered {
        legs.push(leg(
            "na_implies_positive_kernels",
            !na.holds || positive,
            format!("NA {} / strictly positive martingale kernels {positive}", na.holds),
        ));
    } else {
        legs.push(skipped(
            "na_implies_positive_kernels",
            "some child has zero weight under every dual vertex",
        ));
    }

    if !na.holds {
        for name in ["attainable_acceptable_is_a0", "witness_dominated", "non_a0_has_positive_expectation"] {
            legs.push(skipped(name, "NA fails"));
        }
        return Ok(FtapReport {
            na: na.holds,
            aip_everywhere: aip_all,
            polytopes_nonempty: nonempty,
            kernels_strictly_positive: positive,
            mixing_interior: mixing,
            ngd,
            legs,
        });
    }

    let horizon = tree.horizon();
    let scale = tree
        .nodes()
        .iter()
        .flat_map(|n| n.price.iter())
        .fold(1.0f64, |m, p| m.max(p.abs()));

    // attainable claims W = Σ_{u ≥ t} θ_u ΔS_{u+1}
    let mut checked = 0;
    let mut failures = 0;
    let lines: Vec<Vec<Vec<f64>>> = (0..tree.len())
        .map(|ix| match &polys[ix] {
            Some(p) => risk_neutral_lines(&p.moments, tree.asset_count()),
            None => Vec::new(),
        })
        .collect();
    for s in 0..samples {
        let t = s % horizon;
        let neutral = s % 2 == 1;
        let mut theta: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
        for ix in tree.internal_nodes() {
            theta[ix] = if neutral {
                let mut z = vec![0.0; tree.asset_count()];
                for line in &lines[ix] {
                    let c = rng.gen_range(-2.0..2.0);
                    z.iter_mut().zip(line).for_each(|(a, b)| *a += c * b);
                }
                z
            } else {
                (0..tree.asset_count()).map(|_| rng.gen_range(-2.0..2.0)).collect()
            };
        }
        let w = NodeFunction::from_fn(tree, horizon, |leaf| {
            let mut total = 0.0;
            let mut cur = leaf;
            while let Some(parent) = tree.node(cur).parent {
                if tree.node(parent).time < t {
                    break;
                }
                let ds: f64 = tree
                    .node(cur)
                    .price
                    .iter()
                    .zip(&tree.node(parent).price)
                    .zip(&theta[parent])
                    .map(|((a, b), th)| th * (a - b))
                    .sum();
                total += ds;
                cur = parent;
            }
            total
        });
        let acceptable = drm.acceptability(&w, t)?;
        let a0 = drm.is_a0(&w, t)?;
        for (acc, zero) in acceptable.values.iter().zip(&a0.values) {
            if *acc {
                checked += 1;
                if !zero {
                    failures += 1;
                }
            }
        }
    }
    legs.push(leg(
        "attainable_acceptable_is_a0",
        failures == 0,
        format!("{checked} acceptable attainable claims, {failures} outside A0"),
    ));

    let witness = witness_from(drm, &polys)?;
    let mut worst = f64::INFINITY;
    let mut positive_checked = 0;
    let mut positive_failures = 0;
    for _ in 0..samples {
        let x = NodeFunction::from_fn(tree, horizon, |_| rng.gen_range(-scale..scale));
        for t in 0..horizon {
            let rho = drm.rho(&x, t)?;
            let eq = witness.conditional(tree, &x, t);
            for (r, e) in rho.values.iter().zip(&eq.values) {
                worst = worst.min(r + e);
            }
            // X' = X + ρ_t(X) is acceptable with zero risk at t
            let shifted = x.zip_with(&rho.lift(tree, horizon), |a, b| a + b);
            let neg = drm.rho(&shifted.neg(), t)?;
            let best = dual_dp(drm, &polys, &shifted)?.values(tree, t);
            for (n, b) in neg.values.iter().zip(&best.values) {
                if *n > 1e-6 * scale {
                    positive_checked += 1;
                    if *b <= tol * scale {
                        positive_failures += 1;
                    }
                }
            }
        }
    }
    legs.push(leg(
        "witness_dominated",
        worst >= -tol * scale * 10.0,
        format!("min of ρ_t(X) + E_Q(X|F_t) over samples: {worst:e}"),
    ));
    legs.push(leg(
        "non_a0_has_positive_expectation",
        positive_failures == 0,
        format!("{positive_checked} acceptable non-A0 claims, {positive_failures} without a positive expectation"),
    ));
    Ok(FtapReport {
        na: na.holds,
        aip_everywhere: aip_all,
        polytopes_nonempty: nonempty,
        kernels_strictly_positive: positive,
        mixing_interior: mixing,
        ngd,
        legs,
    })
}

#[cfg(test)]
mod tests;
