//! Minimal risk-hedging prices.
//!
//! At a non-terminal node with next-step values `V` on the children, the
//! price is `inf_x g(x)` where
//! `g(x) = x·S_t + ρ(x·S_{t+1} − V) = max_q [−x·E_qΔS + E_q V]`,
//! a maximum of affine pieces, one per dual vertex `q`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{self, LpOutcome, LpProblem, LpStatus};
use crate::risk::{expectation, DynamicRiskMeasure, OneStepRiskMeasure};
use crate::settings::Settings;
use crate::tree::{NodeFunction, NodeId, Payoff, ScenarioTree};

/// `g(x) = max_k (slope_k·x + intercept_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GFunction {
    pub node: usize,
    pub pieces: Vec<(Vec<f64>, f64)>,
}

impl GFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|(s, c)| lp::dot(s, x) + c)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].0.len()
    }
}

/// Per-vertex conditional means `E_q ΔS` at a node.
pub(crate) fn moments(step: &OneStepRiskMeasure, delta: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = delta[0].len();
    step.dual_vertices
        .iter()
        .map(|q| (0..d).map(|i| q.iter().zip(delta).map(|(w, ds)| w * ds[i]).sum()).collect())
        .collect()
}

pub fn build_g(drm: &DynamicRiskMeasure, ix: usize, next_values: &[f64]) -> Result<GFunction> {
    let tree = drm.tree();
    let delta = tree.delta_s(ix)?;
    if next_values.len() != delta.len() {
        return Err(Error::InvalidSpec(format!(
            "{} next values for {} children",
            next_values.len(),
            delta.len()
        )));
    }
    let step = drm.step(ix);
    let pieces = moments(step, &delta)
        .into_iter()
        .zip(&step.dual_vertices)
        .map(|(m, q)| (m.iter().map(|v| -v).collect(), expectation(q, next_values)))
        .collect();
    Ok(GFunction { node: ix, pieces })
}

#[derive(Debug, Clone, PartialEq)]
pub enum GMinimum {
    Attained {
        value: f64,
        argmin: Vec<f64>,
        /// The optimal face may contain more than one point.
        degenerate: bool,
    },
    /// `g` is unbounded below along `ray`.
    MinusInfinity { ray: Vec<f64> },
}

impl GMinimum {
    pub fn value(&self) -> f64 {
        match self {
            GMinimum::Attained { value, .. } => *value,
            GMinimum::MinusInfinity { .. } => f64::NEG_INFINITY,
        }
    }
}

/// Epigraph LP `min τ` s.t. `τ ≥ slope_k·x + intercept_k`.
pub fn minimize_g(g: &GFunction, settings: &Settings) -> Result<GMinimum> {
    let d = g.dim();
    let mut p = LpProblem::new(d + 1);
    p.set_objective(d, 1.0);
    for j in 0..=d {
        p.set_free(j);
    }
    for (slope, c) in &g.pieces {
        let mut row = slope.clone();
        row.push(-1.0);
        p.add_le(row, -c);
    }
    match lp::solve(&p, &settings.lp())? {
        LpOutcome::Optimal(s) => Ok(GMinimum::Attained {
            value: s.value,
            argmin: s.primal_point[..d].to_vec(),
            degenerate: s.alternative_optima,
        }),
        LpOutcome::Unbounded { ray } => Ok(GMinimum::MinusInfinity { ray: ray[..d].to_vec() }),
        LpOutcome::Infeasible => Err(Error::NumericalFailure("epigraph LP reported infeasible".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodePrice {
    pub node: NodeId,
    pub time: usize,
    /// `−∞` when the claim can be super-hedged from any initial capital.
    pub price: f64,
    pub theta: Option<Vec<f64>>,
    pub attained: bool,
    /// LP status; `None` at leaves and at nodes short-circuited by a `−∞`
    /// child.
    pub status: Option<LpStatus>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingResult {
    /// Indexed by arena index.
    pub nodes: Vec<NodePrice>,
}

impl PricingResult {
    pub fn prices(&self, tree: &ScenarioTree, t: usize) -> NodeFunction {
        NodeFunction::from_fn(tree, t, |ix| self.nodes[ix].price)
    }

    pub fn root_price(&self, tree: &ScenarioTree) -> f64 {
        self.nodes[tree.root()].price
    }

    pub fn has_minus_infinity(&self) -> bool {
        self.nodes.iter().any(|n| n.price == f64::NEG_INFINITY)
    }
}

fn check_maturity(tree: &ScenarioTree, h: &Payoff) -> Result<()> {
    if h.maturity != tree.horizon() {
        return Err(Error::MaturityMismatch {
            expected: tree.horizon(),
            found: h.maturity,
        });
    }
    Ok(())
}

/// `P*_T = h`, `P*_t = min_x g_t(x)` backwards, slice by slice.
pub fn backward_price(drm: &DynamicRiskMeasure, h: &Payoff) -> Result<PricingResult> {
    let tree = drm.tree();
    check_maturity(tree, h)?;
    let settings = drm.settings();
    let mut nodes: Vec<Option<NodePrice>> = vec![None; tree.len()];
    for &ix in tree.slice(tree.horizon()) {
        nodes[ix] = Some(NodePrice {
            node: tree.node(ix).id,
            time: tree.horizon(),
            price: *h.values.at(tree, ix),
            theta: None,
            attained: true,
            status: None,
            degenerate: false,
        });
    }
    for t in (0..tree.horizon()).rev() {
        let solved = settings.exec.try_map(tree.slice(t), |&ix| {
            let node = tree.node(ix);
            let next: Vec<f64> = node
                .children
                .iter()
                .map(|&c| nodes[c].as_ref().expect("child priced").price)
                .collect();
            let mut out = NodePrice {
                node: node.id,
                time: t,
                price: f64::NEG_INFINITY,
                theta: None,
                attained: false,
                status: None,
                degenerate: false,
            };
            if next.iter().any(|v| *v == f64::NEG_INFINITY) {
                return Ok(out);
            }
            match minimize_g(&build_g(drm, ix, &next)?, settings)? {
                GMinimum::Attained { value, argmin, degenerate } => {
                    out.price = value;
                    out.theta = Some(argmin);
                    out.attained = true;
                    out.status = Some(LpStatus::Optimal);
                    out.degenerate = degenerate;
                }
                GMinimum::MinusInfinity { .. } => out.status = Some(LpStatus::Unbounded),
            }
            Ok::<_, Error>(out)
        })?;
        for (&ix, p) in tree.slice(t).iter().zip(solved) {
            nodes[ix] = Some(p);
        }
    }
    Ok(PricingResult {
        nodes: nodes.into_iter().map(|n| n.expect("every node priced")).collect(),
    })
}

/// Price at every time-`t` node from one LP over all strategies on the
/// subtree, without the slice-by-slice recursion.
pub fn direct_price(drm: &DynamicRiskMeasure, h: &Payoff, t: usize) -> Result<NodeFunction> {
    let tree = drm.tree();
    check_maturity(tree, h)?;
    if t > tree.horizon() {
        return Err(Error::InvalidSpec(format!("time {t} beyond horizon")));
    }
    if t == tree.horizon() {
        return Ok(h.values.clone());
    }
    let values = drm
        .settings()
        .exec
        .try_map(tree.slice(t), |&ix| subtree_price(drm, &h.values, ix))?;
    Ok(NodeFunction { time: t, values })
}

fn subtree_price(drm: &DynamicRiskMeasure, h: &NodeFunction, root: usize) -> Result<f64> {
    let tree = drm.tree();
    let d = tree.asset_count();
    let mut internal = Vec::new();
    let mut stack = vec![root];
    while let Some(i) = stack.pop() {
        if !tree.node(i).is_leaf() {
            internal.push(i);
            stack.extend(tree.node(i).children.iter().copied());
        }
    }
    // variables per internal node k: θ (d entries) then τ
    let width = d + 1;
    let mut col = vec![usize::MAX; tree.len()];
    for (k, &i) in internal.iter().enumerate() {
        col[i] = k * width;
    }
    let n = internal.len() * width;
    let mut p = LpProblem::new(n);
    for j in 0..n {
        p.set_free(j);
    }
    p.set_objective(col[root] + d, 1.0);
    for &i in &internal {
        let node = tree.node(i);
        let delta = tree.delta_s(i)?;
        for q in &drm.step(i).dual_vertices {
            // Σ q_j τ(child_j) − θ·E_qΔS − τ(node) ≤ −Σ_{leaf j} q_j h_j
            let mut row = vec![0.0; n];
            let mut rhs = 0.0;
            row[col[i] + d] = -1.0;
            for (j, &c) in node.children.iter().enumerate() {
                if q[j] == 0.0 {
                    continue;
                }
                for a in 0..d {
                    row[col[i] + a] -= q[j] * delta[j][a];
                }
                if tree.node(c).is_leaf() {
                    rhs -= q[j] * h.at(tree, c);
                } else {
                    row[col[c] + d] += q[j];
                }
            }
            p.add_le(row, rhs);
        }
    }
    match lp::solve(&p, &drm.settings().lp())? {
        LpOutcome::Optimal(s) => Ok(s.value),
        LpOutcome::Unbounded { .. } => Ok(f64::NEG_INFINITY),
        LpOutcome::Infeasible => Err(Error::NumericalFailure("direct pricing LP reported infeasible".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub node: NodeId,
    pub lower: f64,
    pub price: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundsReport {
    pub checked: usize,
    /// Smallest of `upper − price` and `price − lower` over checked nodes.
    pub min_slack: f64,
    pub violations: Vec<BoundViolation>,
}

/// `ρ(−V) ≥ P* ≥ −ρ(V)` at each non-terminal node, `V` the next-step
/// prices. Nodes priced at `−∞` are skipped.
pub fn verify_price_bounds(drm: &DynamicRiskMeasure, result: &PricingResult) -> BoundsReport {
    let tree = drm.tree();
    let tol = drm.settings().tol;
    let mut report = BoundsReport {
        min_slack: f64::INFINITY,
        ..Default::default()
    };
    for ix in tree.internal_nodes() {
        let price = result.nodes[ix].price;
        if price == f64::NEG_INFINITY {
            continue;
        }
        let next: Vec<f64> = tree.node(ix).children.iter().map(|&c| result.nodes[c].price).collect();
        let step = drm.step(ix);
        let upper = step.rho(&next.iter().map(|v| -v).collect::<Vec<_>>());
        let lower = -step.rho(&next);
        let slack = (upper - price).min(price - lower);
        report.checked += 1;
        report.min_slack = report.min_slack.min(slack);
        if slack < -tol * (1.0 + price.abs()) {
            report.violations.push(BoundViolation {
                node: tree.node(ix).id,
                lower,
                price,
                upper,
            });
        }
    }
    report
}

/// Orthonormal basis of `{z : z·v = 0 for every moment vector v}`, the
/// directions along which `ρ(z·ΔS) = ρ(−z·ΔS) = 0`.
pub fn risk_neutral_lines(moment_vectors: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let k = moment_vectors.len();
    let a = DMatrix::from_fn(k.max(d), d, |i, j| if i < k { moment_vectors[i][j] } else { 0.0 });
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let scale = moment_vectors
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let mut out = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= 1e-10 * scale {
            out.push(vt.row(i).iter().copied().collect());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineReport {
    pub neutral_checks: usize,
    /// Largest `|g(rz) − g(0)|` along risk-neutral directions.
    pub max_neutral_gap: f64,
    pub coercive_checks: usize,
    /// Smallest `g(rz) − (|r|·min ρ(±z·ΔS) − ρ(V))`.
    pub min_coercive_slack: f64,
    /// Sampled directions that are risk-neutral on one side only.
    pub skipped: usize,
}

impl Default for LineReport {
    fn default() -> Self {
        Self {
            neutral_checks: 0,
            max_neutral_gap: 0.0,
            coercive_checks: 0,
            min_coercive_slack: f64::INFINITY,
            skipped: 0,
        }
    }
}

impl LineReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_neutral_gap <= tol && self.min_coercive_slack >= -tol
    }

    pub fn merge(&mut self, other: &LineReport) {
        self.neutral_checks += other.neutral_checks;
        self.max_neutral_gap = self.max_neutral_gap.max(other.max_neutral_gap);
        self.coercive_checks += other.coercive_checks;
        self.min_coercive_slack = self.min_coercive_slack.min(other.min_coercive_slack);
        self.skipped += other.skipped;
    }
}

/// Constancy of `g` on risk-neutral lines and the linear lower bound on
/// lines where both signs carry positive risk.
pub fn verify_line_behavior(
    drm: &DynamicRiskMeasure,
    ix: usize,
    next_values: &[f64],
    radii: &[f64],
    samples: usize,
    rng: &mut impl Rng,
) -> Result<LineReport> {
    let tree = drm.tree();
    let d = tree.asset_count();
    let tol = drm.settings().tol;
    let g = build_g(drm, ix, next_values)?;
    let step = drm.step(ix);
    let mv = moments(step, &tree.delta_s(ix)?);
    let g0 = g.eval(&vec![0.0; d]);
    let rho_v = step.rho(next_values);
    let rho_dir = |z: &[f64]| mv.iter().map(|v| -lp::dot(z, v)).fold(f64::NEG_INFINITY, f64::max);
    let mut report = LineReport::default();
    for z in risk_neutral_lines(&mv, d) {
        for &r in radii {
            let x: Vec<f64> = z.iter().map(|v| r * v).collect();
            report.neutral_checks += 1;
            report.max_neutral_gap = report.max_neutral_gap.max((g.eval(&x) - g0).abs());
        }
    }
    for _ in 0..samples {
        let mut z: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        z.iter_mut().for_each(|v| *v /= norm);
        let plus = rho_dir(&z);
        let minus = rho_dir(&z.iter().map(|v| -v).collect::<Vec<_>>());
        if plus <= tol && minus <= tol {
            for &r in radii {
                let x: Vec<f64> = z.iter().map(|v| r * v).collect();
                report.neutral_checks += 1;
                report.max_neutral_gap = report.max_neutral_gap.max((g.eval(&x) - g0).abs());
            }
        } else if plus > tol && minus > tol {
            for &r in radii {
                let x: Vec<f64> = z.iter().map(|v| r * v).collect();
                let bound = r.abs() * plus.min(minus) - rho_v;
                report.coercive_checks += 1;
                report.min_coercive_slack = report.min_coercive_slack.min(g.eval(&x) - bound);
            }
        } else {
            report.skipped += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
