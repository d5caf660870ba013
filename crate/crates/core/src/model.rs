//! Model file ingestion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::{LocalMeasure, MeasureKind, RiskMeasureSpec};
use crate::tree::{NodeFunction, NodeId, NodeSpec, Payoff, ScenarioTree};

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub tree: ScenarioTree,
    pub risk: RiskMeasureSpec,
    pub payoff: Option<Payoff>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: NodeId,
    time: usize,
    parent: Option<NodeId>,
    prob: f64,
    price: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPayoff {
    time: usize,
    values: BTreeMap<NodeId, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    assets: Vec<String>,
    nodes: Vec<RawNode>,
    risk_measure: RiskMeasureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payoff: Option<RawPayoff>,
}

pub fn load_model(text: &[u8]) -> Result<Model> {
    let raw: RawModel = serde_json::from_slice(text).map_err(|e| Error::Parse(e.to_string()))?;
    let specs = raw
        .nodes
        .into_iter()
        .map(|n| NodeSpec {
            id: n.id,
            time: n.time,
            parent: n.parent,
            prob: n.prob,
            price: n.price,
        })
        .collect();
    let tree = ScenarioTree::new(raw.assets, specs)?;
    let mut errors = check_spec(&tree, &raw.risk_measure);
    let payoff = match raw.payoff {
        None => None,
        Some(p) if p.time == 0 => {
            errors.push("payoff time must be at least 1".into());
            None
        }
        Some(p) => match NodeFunction::from_map(&tree, p.time, &p.values) {
            Ok(v) => Some(Payoff::new(v)),
            Err(Error::Validation(v)) => {
                errors.extend(v.into_iter().map(|m| format!("payoff: {m}")));
                None
            }
            Err(e) => return Err(e),
        },
    };
    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    Ok(Model {
        tree,
        risk: raw.risk_measure,
        payoff,
    })
}

/// Structural checks on the risk measure that need the tree: every keyed
/// node exists and is non-terminal, vectors have one entry per child, and
/// every non-terminal node is covered.
fn check_spec(tree: &ScenarioTree, spec: &RiskMeasureSpec) -> Vec<String> {
    let mut errors = Vec::new();
    let check_alpha = |alpha: f64, at: &str, errors: &mut Vec<String>| {
        if !(alpha > 0.0 && alpha <= 1.0) {
            errors.push(format!("{at}: CVaR level {alpha} outside (0, 1]"));
        }
    };
    let check_vectors = |id: NodeId, vs: &[Vec<f64>], errors: &mut Vec<String>| match tree.ix(id) {
        Err(_) => errors.push(format!("risk measure: unknown node {id}")),
        Ok(ix) if tree.node(ix).is_leaf() => errors.push(format!("risk measure: node {id} is terminal")),
        Ok(ix) => {
            let m = tree.node(ix).children.len();
            if vs.is_empty() {
                errors.push(format!("risk measure: node {id} has an empty vector list"));
            }
            if vs.iter().any(|v| v.len() != m) {
                errors.push(format!("risk measure: node {id} needs vectors of length {m}"));
            }
        }
    };
    for (id, m) in &spec.overrides {
        match m {
            LocalMeasure::WorstCase => {}
            LocalMeasure::Cvar { alpha } => check_alpha(*alpha, &format!("override {id}"), &mut errors),
            LocalMeasure::Kernels { kernels: vs } | LocalMeasure::Cone { generators: vs } => {
                check_vectors(*id, vs, &mut errors)
            }
        }
        match tree.ix(*id) {
            Err(_) => errors.push(format!("override: unknown node {id}")),
            Ok(ix) if tree.node(ix).is_leaf() => errors.push(format!("override: node {id} is terminal")),
            Ok(_) => {}
        }
    }
    match &spec.kind {
        MeasureKind::WorstCase => {}
        MeasureKind::Cvar { alpha } => check_alpha(*alpha, "risk measure", &mut errors),
        MeasureKind::Kernels { per_node } | MeasureKind::Cone { per_node } => {
            for (id, vs) in per_node {
                check_vectors(*id, vs, &mut errors);
            }
            for ix in tree.internal_nodes() {
                let id = tree.node(ix).id;
                if !per_node.contains_key(&id) && !spec.overrides.contains_key(&id) {
                    errors.push(format!("risk measure: no entry for node {id}"));
                }
            }
        }
    }
    errors.dedup();
    errors
}

/// Serializes a model back into the file format.
pub fn to_json(model: &Model) -> String {
    let tree = &model.tree;
    let mut nodes: Vec<RawNode> = tree
        .node_specs()
        .into_iter()
        .map(|s| RawNode {
            id: s.id,
            time: s.time,
            parent: s.parent,
            prob: s.prob,
            price: s.price,
        })
        .collect();
    nodes.sort_by_key(|n| (n.time, n.id));
    let raw = RawModel {
        assets: tree.assets().to_vec(),
        nodes,
        risk_measure: model.risk.clone(),
        payoff: model.payoff.as_ref().map(|p| RawPayoff {
            time: p.maturity,
            values: p.values.to_map(tree),
        }),
    };
    serde_json::to_string_pretty(&raw).expect("model serializes")
}
