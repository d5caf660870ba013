//! Coherent risk measures on the tree.
//!
//! Each non-terminal node carries a one-step measure given by the vertices
//! of its determining set `D(node)` (probability vectors over the children):
//! `ρ(x) = max_{q ∈ D} Σ q_j (−x_j)`. The dynamic measure is the backward
//! composition of the one-step measures, which makes it time consistent by
//! construction.

mod checks;
pub mod vertices;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::settings::Settings;
use crate::tree::{NodeFunction, NodeId, ScenarioTree};

pub use checks::{
    check_coherence_axioms, check_time_consistency, validate_acceptance_cone, CoherenceReport,
    CoherenceSample, ConeReport, TimeConsistencyReport, Violation,
};

/// Upper bound on children per node for vertex enumeration.
pub const MAX_CHILDREN: usize = 16;

/// Default cap on the number of rectangular dual measures.
pub const DUAL_SET_CAP: u128 = 1_000_000;

/// Measure attached to a single node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LocalMeasure {
    WorstCase,
    Cvar { alpha: f64 },
    Kernels { kernels: Vec<Vec<f64>> },
    Cone { generators: Vec<Vec<f64>> },
}

/// Global measure in the model file. Kernel and cone measures are listed
/// per node.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeasureKind {
    WorstCase,
    Cvar { alpha: f64 },
    Kernels { per_node: BTreeMap<NodeId, Vec<Vec<f64>>> },
    Cone { per_node: BTreeMap<NodeId, Vec<Vec<f64>>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct RiskMeasureSpec {
    #[serde(flatten)]
    pub kind: MeasureKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<NodeId, LocalMeasure>,
}

impl RiskMeasureSpec {
    pub fn worst_case() -> Self {
        MeasureKind::WorstCase.into()
    }

    pub fn cvar(alpha: f64) -> Self {
        MeasureKind::Cvar { alpha }.into()
    }

    pub fn with_override(mut self, node: NodeId, m: LocalMeasure) -> Self {
        self.overrides.insert(node, m);
        self
    }

    /// Measure in force at `node`.
    pub fn local(&self, node: NodeId) -> Result<LocalMeasure> {
        if let Some(m) = self.overrides.get(&node) {
            return Ok(m.clone());
        }
        let missing = || Error::InvalidSpec(format!("no entry for node {node}"));
        Ok(match &self.kind {
            MeasureKind::WorstCase => LocalMeasure::WorstCase,
            MeasureKind::Cvar { alpha } => LocalMeasure::Cvar { alpha: *alpha },
            MeasureKind::Kernels { per_node } => LocalMeasure::Kernels {
                kernels: per_node.get(&node).ok_or_else(missing)?.clone(),
            },
            MeasureKind::Cone { per_node } => LocalMeasure::Cone {
                generators: per_node.get(&node).ok_or_else(missing)?.clone(),
            },
        })
    }
}

// Flattened tagged enums buffer their input, which loses integer map keys,
// so deserialization goes through a plain record.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(rename = "type")]
    kind: String,
    alpha: Option<f64>,
    per_node: Option<BTreeMap<NodeId, Vec<Vec<f64>>>>,
    #[serde(default)]
    overrides: BTreeMap<NodeId, LocalMeasure>,
}

impl TryFrom<RawSpec> for RiskMeasureSpec {
    type Error = String;

    fn try_from(raw: RawSpec) -> std::result::Result<Self, String> {
        let kind = match (raw.kind.as_str(), raw.alpha, raw.per_node) {
            ("worst_case", None, None) => MeasureKind::WorstCase,
            ("cvar", Some(alpha), None) => MeasureKind::Cvar { alpha },
            ("kernels", None, Some(per_node)) => MeasureKind::Kernels { per_node },
            ("cone", None, Some(per_node)) => MeasureKind::Cone { per_node },
            ("worst_case" | "cvar" | "kernels" | "cone", _, _) => {
                return Err(format!("wrong fields for risk measure type `{}`", raw.kind))
            }
            (other, _, _) => return Err(format!("unknown risk measure type `{other}`")),
        };
        Ok(Self {
            kind,
            overrides: raw.overrides,
        })
    }
}

impl From<MeasureKind> for RiskMeasureSpec {
    fn from(kind: MeasureKind) -> Self {
        Self {
            kind,
            overrides: BTreeMap::new(),
        }
    }
}

/// Conditional one-step measure at a node, stored as the vertices of its
/// determining polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepRiskMeasure {
    pub node: usize,
    pub dual_vertices: Vec<Vec<f64>>,
}

impl OneStepRiskMeasure {
    /// `max_q Σ q_j (−x_j)`.
    pub fn rho(&self, x: &[f64]) -> f64 {
        self.dual_vertices
            .iter()
            .map(|q| -expectation(q, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_q Σ q_j v_j`, i.e. `rho(−v)`; propagates `−∞` children only
    /// through vertices that charge them.
    pub fn upper_expectation(&self, v: &[f64]) -> f64 {
        self.dual_vertices
            .iter()
            .map(|q| expectation(q, v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn child_count(&self) -> usize {
        self.dual_vertices[0].len()
    }
}

/// `Σ q_j x_j`, skipping zero weights so that `0·(±∞) = 0`.
pub(crate) fn expectation(q: &[f64], x: &[f64]) -> f64 {
    q.iter()
        .zip(x)
        .filter(|(w, _)| **w != 0.0)
        .map(|(w, v)| w * v)
        .sum()
}

pub fn build_one_step(
    tree: &ScenarioTree,
    spec: &RiskMeasureSpec,
    ix: usize,
    settings: &Settings,
) -> Result<OneStepRiskMeasure> {
    let node = tree.node(ix);
    if node.is_leaf() {
        return Err(Error::NotAParent(node.id));
    }
    let m = node.children.len();
    if m > MAX_CHILDREN {
        return Err(Error::InvalidSpec(format!(
            "node {} has {m} children; at most {MAX_CHILDREN} are supported",
            node.id
        )));
    }
    let probs = tree.child_probs(ix);
    let dual_vertices = match spec.local(node.id)? {
        LocalMeasure::WorstCase => (0..m)
            .map(|j| {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                e
            })
            .collect(),
        LocalMeasure::Cvar { alpha } => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::InvalidSpec(format!("CVaR level {alpha} outside (0, 1]")));
            }
            let caps: Vec<f64> = probs.iter().map(|p| p / alpha).collect();
            vertices::box_simplex_vertices(&caps)
        }
        LocalMeasure::Kernels { kernels } => {
            if kernels.is_empty() {
                return Err(Error::InvalidSpec(format!("node {}: empty kernel list", node.id)));
            }
            for k in &kernels {
                check_probability_vector(k, m, node.id)?;
            }
            vertices::hull_vertices(&kernels, &settings.lp())?
        }
        LocalMeasure::Cone { generators } => {
            if generators.is_empty() || generators.iter().any(|g| g.len() != m) {
                return Err(Error::InvalidSpec(format!(
                    "node {}: cone generators must be nonempty vectors of length {m}",
                    node.id
                )));
            }
            let report = validate_acceptance_cone(&generators, settings)?;
            if !report.is_valid() {
                return Err(Error::InvalidSpec(format!("node {}: {}", node.id, report.summary())));
            }
            let mut rows: Vec<(Vec<f64>, f64)> = generators.iter().map(|g| (g.clone(), 0.0)).collect();
            for j in 0..m {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                rows.push((e, 0.0));
            }
            let v = vertices::basis_enumeration(&rows, m)?;
            if v.is_empty() {
                return Err(Error::ConeEmptyDual { node: node.id });
            }
            v
        }
    };
    Ok(OneStepRiskMeasure { node: ix, dual_vertices })
}

fn check_probability_vector(q: &[f64], m: usize, node: NodeId) -> Result<()> {
    if q.len() != m {
        return Err(Error::InvalidSpec(format!(
            "node {node}: kernel has {} entries for {m} children",
            q.len()
        )));
    }
    let sum: f64 = q.iter().sum();
    if q.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidSpec(format!("node {node}: kernel {q:?} is not a probability vector")));
    }
    Ok(())
}

/// Time-consistent dynamic risk measure obtained by composing one-step
/// measures backwards through the tree.
#[derive(Debug, Clone)]
pub struct DynamicRiskMeasure<'t> {
    tree: &'t ScenarioTree,
    steps: Vec<Option<OneStepRiskMeasure>>,
    settings: Settings,
}

impl<'t> DynamicRiskMeasure<'t> {
    pub fn build(tree: &'t ScenarioTree, spec: &RiskMeasureSpec, settings: Settings) -> Result<Self> {
        let internal: Vec<usize> = tree.internal_nodes().collect();
        let built = settings
            .exec
            .try_map(&internal, |&ix| build_one_step(tree, spec, ix, &settings))?;
        let mut steps = vec![None; tree.len()];
        for m in built {
            let ix = m.node;
            steps[ix] = Some(m);
        }
        Ok(Self { tree, steps, settings })
    }

    pub fn tree(&self) -> &'t ScenarioTree {
        self.tree
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    /// One-step measure at a non-terminal node.
    pub fn step(&self, ix: usize) -> &OneStepRiskMeasure {
        self.steps[ix]
            .as_ref()
            .unwrap_or_else(|| panic!("node {} is terminal", self.tree.node(ix).id))
    }

    /// `ρ_t(X)` for `X` measurable at `x.time ≥ t`.
    pub fn rho(&self, x: &NodeFunction, t: usize) -> Result<NodeFunction> {
        if t > x.time {
            return Err(Error::InvalidSpec(format!(
                "cannot evaluate ρ_{t} of a time-{} variable",
                x.time
            )));
        }
        let tree = self.tree;
        // v holds ρ_s(X) on the current slice
        let mut v = x.neg();
        for s in (t..x.time).rev() {
            let prev = v;
            let values = self.settings.exec.map(tree.slice(s), |&ix| {
                let child_vals: Vec<f64> =
                    tree.node(ix).children.iter().map(|&c| *prev.at(tree, c)).collect();
                self.step(ix).upper_expectation(&child_vals)
            });
            v = NodeFunction { time: s, values };
        }
        Ok(v)
    }

    /// Acceptability of `X` at each time-`t` node: `ρ_t(X) ≤ tol`.
    pub fn acceptability(&self, x: &NodeFunction, t: usize) -> Result<NodeFunction<bool>> {
        let tol = self.settings.tol;
        Ok(self.rho(x, t)?.map(|r| *r <= tol))
    }

    /// Membership in `A⁰ = A ∩ (−A)`: both `ρ_t(X)` and `ρ_t(−X)` vanish.
    pub fn is_a0(&self, x: &NodeFunction, t: usize) -> Result<NodeFunction<bool>> {
        let tol = self.settings.tol;
        let plus = self.rho(x, t)?;
        let minus = self.rho(&x.neg(), t)?;
        Ok(plus.zip_map(&minus, |a, b| {
            let both = a <= tol && b <= tol;
            debug_assert!(!both || (a.abs() <= 2.0 * tol && b.abs() <= 2.0 * tol));
            both
        }))
    }

    /// Vertex measures of the rectangular composition for each time-`t`
    /// node, as probability vectors over the leaves below it.
    pub fn extract_dual_set(&self, t: usize, cap: u128) -> Result<Vec<DualSet>> {
        let tree = self.tree;
        let mut out = Vec::new();
        for &ix in tree.slice(t) {
            let count = self.product_count(ix);
            if count > cap {
                return Err(Error::CombinatorialLimit { count, cap });
            }
            out.push(DualSet {
                node: ix,
                leaves: tree.leaves_under(ix),
                measures: self.leaf_measures(ix),
            });
        }
        Ok(out)
    }

    fn product_count(&self, ix: usize) -> u128 {
        let node = self.tree.node(ix);
        if node.is_leaf() {
            return 1;
        }
        let children = node
            .children
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(self.product_count(c)));
        (self.step(ix).dual_vertices.len() as u128).saturating_mul(children)
    }

    fn leaf_measures(&self, ix: usize) -> Vec<Vec<f64>> {
        let node = self.tree.node(ix);
        if node.is_leaf() {
            return vec![vec![1.0]];
        }
        let per_child: Vec<Vec<Vec<f64>>> =
            node.children.iter().map(|&c| self.leaf_measures(c)).collect();
        let mut out = Vec::new();
        for q in &self.step(ix).dual_vertices {
            // every combination of one measure per child
            let mut partial: Vec<Vec<f64>> = vec![Vec::new()];
            for (j, options) in per_child.iter().enumerate() {
                let mut next = Vec::with_capacity(partial.len() * options.len());
                for prefix in &partial {
                    for m in options {
                        let mut v = prefix.clone();
                        v.extend(m.iter().map(|w| q[j] * w));
                        next.push(v);
                    }
                }
                partial = next;
            }
            for v in partial {
                vertices::push_unique(&mut out, v);
            }
        }
        out
    }
}

/// Leaf measures of the composed measure below one node.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSet {
    pub node: usize,
    pub leaves: Vec<usize>,
    pub measures: Vec<Vec<f64>>,
}

impl DualSet {
    /// `max_Q E_Q(−X)` over the stored measures, `X` given on the leaves.
    pub fn rho(&self, tree: &ScenarioTree, x: &NodeFunction) -> f64 {
        let vals: Vec<f64> = self.leaves.iter().map(|&l| -*x.at(tree, l)).collect();
        self.measures
            .iter()
            .map(|q| expectation(q, &vals))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
