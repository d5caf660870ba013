//! No-arbitrage diagnostics.
//!
//! At a node the map `z ↦ ρ(z·ΔS) = max_q −z·E_qΔS` is determined by the
//! moment vectors `v_q = E_qΔS`, one per dual vertex, so every condition
//! becomes a small LP in those vectors.

use serde::Serialize;

use crate::error::Result;
use crate::lp::{self, LpOutcome, LpProblem};
use crate::pricing::{self, moments};
use crate::risk::{DynamicRiskMeasure, RiskMeasureSpec};
use crate::settings::Settings;
use crate::tree::{NodeFunction, NodeId, Payoff, ScenarioTree};

#[derive(Debug, Clone, PartialEq)]
pub struct MomentVectors {
    pub node: usize,
    pub vectors: Vec<Vec<f64>>,
}

pub fn moment_vectors(drm: &DynamicRiskMeasure, ix: usize) -> Result<MomentVectors> {
    let delta = drm.tree().delta_s(ix)?;
    Ok(MomentVectors {
        node: ix,
        vectors: moments(drm.step(ix), &delta),
    })
}

fn scale(vectors: &[Vec<f64>]) -> f64 {
    vectors.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()))
}

fn unit_max_norm(z: Vec<f64>) -> Vec<f64> {
    let m = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        z
    } else {
        z.into_iter().map(|v| v / m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AipWitness {
    /// Martingale kernel `q* = Σ λ_q q` in `conv D(node)`.
    Kernel(Vec<f64>),
    /// Direction with `ρ(z·ΔS) < 0`, unit max-norm.
    Direction(Vec<f64>),
}

/// AIP at a node: `0 ∈ conv{E_qΔS}`.
pub fn check_aip(drm: &DynamicRiskMeasure, ix: usize) -> Result<(bool, AipWitness)> {
    let mv = moment_vectors(drm, ix)?;
    let opts = drm.settings().lp();
    let vs = &mv.vectors;
    let k = vs.len();
    let d = drm.tree().asset_count();
    let mut p = LpProblem::new(k);
    p.add_eq(vec![1.0; k], 1.0);
    for a in 0..d {
        p.add_eq(vs.iter().map(|v| v[a]).collect(), 0.0);
    }
    if let LpOutcome::Optimal(s) = lp::solve(&p, &opts)? {
        let verts = &drm.step(ix).dual_vertices;
        let m = verts[0].len();
        let q = (0..m)
            .map(|j| verts.iter().zip(&s.primal_point).map(|(v, l)| l * v[j]).sum())
            .collect();
        return Ok((true, AipWitness::Kernel(q)));
    }
    // maximize s subject to z·v ≥ s for every v, z ∈ [−1, 1]^d, s ≤ 1
    let mut p = LpProblem::new(d + 1).minimize({
        let mut c = vec![0.0; d + 1];
        c[d] = -1.0;
        c
    });
    for a in 0..d {
        p.set_bounds(a, -1.0, 1.0);
    }
    p.set_bounds(d, f64::NEG_INFINITY, 1.0);
    for v in vs {
        let mut row: Vec<f64> = v.iter().map(|x| -x).collect();
        row.push(1.0);
        p.add_le(row, 0.0);
    }
    let s = lp::solve(&p, &opts)?;
    let z = s.solution().expect("separation LP is feasible and bounded").primal_point[..d].to_vec();
    Ok((false, AipWitness::Direction(unit_max_norm(z))))
}

/// SRN at a node: the cone `{z : z·v ≥ 0 ∀v}` is a linear subspace.
/// Returns a one-sided risk-neutral direction on failure.
pub fn check_srn(drm: &DynamicRiskMeasure, ix: usize) -> Result<(bool, Option<Vec<f64>>)> {
    let mv = moment_vectors(drm, ix)?;
    let vs = &mv.vectors;
    let d = drm.tree().asset_count();
    let total: Vec<f64> = (0..d).map(|a| vs.iter().map(|v| v[a]).sum()).collect();
    let mut p = LpProblem::new(d).minimize(total.iter().map(|x| -x).collect());
    for a in 0..d {
        p.set_bounds(a, -1.0, 1.0);
    }
    for v in vs {
        p.add_le(v.iter().map(|x| -x).collect(), 0.0);
    }
    let s = lp::solve(&p, &drm.settings().lp())?;
    let s = s.solution().expect("bounded feasible LP");
    let holds = -s.value <= drm.settings().tol * scale(vs) * vs.len() as f64;
    Ok((holds, (!holds).then(|| unit_max_norm(s.primal_point.clone()))))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeVerdict {
    pub node: NodeId,
    pub time: usize,
    pub aip: bool,
    pub srn: bool,
    pub na: bool,
    pub kernel: Option<Vec<f64>>,
    pub aip_direction: Option<Vec<f64>>,
    pub srn_direction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaReport {
    pub holds: bool,
    pub verdicts: Vec<NodeVerdict>,
}

impl NaReport {
    pub fn aip_everywhere(&self) -> bool {
        self.verdicts.iter().all(|v| v.aip)
    }
}

pub fn node_verdict(drm: &DynamicRiskMeasure, ix: usize) -> Result<NodeVerdict> {
    let node = drm.tree().node(ix);
    let (aip, w) = check_aip(drm, ix)?;
    let (srn, srn_direction) = check_srn(drm, ix)?;
    let (kernel, aip_direction) = match w {
        AipWitness::Kernel(q) => (Some(q), None),
        AipWitness::Direction(z) => (None, Some(z)),
    };
    Ok(NodeVerdict {
        node: node.id,
        time: node.time,
        aip,
        srn,
        na: aip && srn,
        kernel,
        aip_direction,
        srn_direction,
    })
}

/// Verdicts at every non-terminal node, or only at time `t` when given.
pub fn check_na(drm: &DynamicRiskMeasure, t: Option<usize>) -> Result<NaReport> {
    let tree = drm.tree();
    let nodes: Vec<usize> = match t {
        Some(t) => tree.slice(t).to_vec(),
        None => tree.internal_nodes().collect(),
    };
    let verdicts = drm.settings().exec.try_map(&nodes, |&ix| node_verdict(drm, ix))?;
    Ok(NaReport {
        holds: verdicts.iter().all(|v| v.na),
        verdicts,
    })
}

/// Largest `ε` with a kernel `q ≥ ε` in the simplex such that
/// `Σ q_j ΔS_j = 0`; `None` when no martingale kernel exists.
pub fn positive_kernel_radius(tree: &ScenarioTree, ix: usize, settings: &Settings) -> Result<Option<f64>> {
    let delta = tree.delta_s(ix)?;
    let m = delta.len();
    let d = tree.asset_count();
    // variables q_1..q_m, ε
    let mut p = LpProblem::new(m + 1).minimize({
        let mut c = vec![0.0; m + 1];
        c[m] = -1.0;
        c
    });
    p.set_bounds(m, 0.0, 1.0);
    let mut sum = vec![1.0; m];
    sum.push(0.0);
    p.add_eq(sum, 1.0);
    for a in 0..d {
        let mut row: Vec<f64> = delta.iter().map(|ds| ds[a]).collect();
        row.push(0.0);
        p.add_eq(row, 0.0);
    }
    for j in 0..m {
        let mut row = vec![0.0; m + 1];
        row[j] = -1.0;
        row[m] = 1.0;
        p.add_le(row, 0.0);
    }
    Ok(lp::solve(&p, &settings.lp())?.value().map(|v| -v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalComparison {
    pub node: NodeId,
    pub na: bool,
    pub positive_kernel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalReport {
    pub nodes: Vec<ClassicalComparison>,
    pub disagreements: Vec<NodeId>,
}

/// Under the worst-case measure, NA must coincide with the existence of a
/// strictly positive martingale kernel at every node.
pub fn check_classical_equivalence(tree: &ScenarioTree, settings: Settings) -> Result<ClassicalReport> {
    let drm = DynamicRiskMeasure::build(tree, &RiskMeasureSpec::worst_case(), settings)?;
    let na = check_na(&drm, None)?;
    let mut nodes = Vec::new();
    let mut disagreements = Vec::new();
    for (v, ix) in na.verdicts.iter().zip(tree.internal_nodes()) {
        let radius = positive_kernel_radius(tree, ix, &settings)?;
        let positive_kernel = radius.is_some_and(|r| r > settings.tol);
        if positive_kernel != v.na {
            disagreements.push(v.node);
        }
        nodes.push(ClassicalComparison {
            node: v.node,
            na: v.na,
            positive_kernel,
        });
    }
    Ok(ClassicalReport { nodes, disagreements })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NgdReport {
    pub time: usize,
    pub holds: bool,
    /// `min_θ ρ_t(Σ θ_u ΔS_{u+1})` per time-`t` node, `−∞` when unbounded.
    pub values: Vec<(NodeId, f64)>,
}

/// No good deal at time `t`: no attainable claim has negative risk.
pub fn check_ngd(drm: &DynamicRiskMeasure, t: usize) -> Result<NgdReport> {
    let tree = drm.tree();
    let zero = Payoff::new(NodeFunction::constant(tree, tree.horizon(), 0.0));
    let m = pricing::direct_price(drm, &zero, t)?;
    let tol = drm.settings().tol;
    let values: Vec<(NodeId, f64)> = tree
        .slice(t)
        .iter()
        .zip(&m.values)
        .map(|(&ix, &v)| (tree.node(ix).id, v))
        .collect();
    Ok(NgdReport {
        time: t,
        holds: values.iter().all(|(_, v)| *v >= -tol),
        values,
    })
}
