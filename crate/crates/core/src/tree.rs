//! Finite filtered market as a rooted scenario tree.
//!
//! Atoms of `F_t` are the time-`t` nodes, so conditional expectations given
//! `F_t` are sums over the children of a node. Nodes live in an arena and
//! are addressed by their arena index (`ix`); the external id from the model
//! file is kept on each node.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

pub type NodeId = u64;

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub time: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Probability given the parent; 1 at the root.
    pub cond_prob: f64,
    /// Discounted prices `S_t` on this atom.
    pub price: Vec<f64>,
    slot: usize,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Position of the node inside its time slice.
    pub fn slot(&self) -> usize {
        self.slot
    }
}

/// Node description as it appears in a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub time: usize,
    pub parent: Option<NodeId>,
    pub prob: f64,
    pub price: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    assets: Vec<String>,
    nodes: Vec<Node>,
    root: usize,
    slices: Vec<Vec<usize>>,
    index: HashMap<NodeId, usize>,
}

impl ScenarioTree {
    /// Builds and validates a tree. All invariant violations are collected
    /// and reported together.
    pub fn new(assets: Vec<String>, specs: Vec<NodeSpec>) -> Result<Self> {
        let mut errors = Vec::new();
        let d = assets.len();
        if d == 0 {
            errors.push("at least one asset is required".to_string());
        }
        let mut index = HashMap::new();
        for (ix, s) in specs.iter().enumerate() {
            if index.insert(s.id, ix).is_some() {
                errors.push(format!("node {}: duplicate id", s.id));
            }
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }

        let mut roots = Vec::new();
        let mut parent_ix = vec![None; specs.len()];
        for (ix, s) in specs.iter().enumerate() {
            match s.parent {
                None => roots.push(ix),
                Some(p) => match index.get(&p) {
                    Some(&pix) => parent_ix[ix] = Some(pix),
                    None => errors.push(format!("node {}: unknown parent {}", s.id, p)),
                },
            }
            if s.price.len() != d {
                errors.push(format!(
                    "node {}: price has {} entries, expected {}",
                    s.id,
                    s.price.len(),
                    d
                ));
            }
            if s.price.iter().any(|x| !x.is_finite() || *x < 0.0) {
                errors.push(format!("node {}: prices must be finite and non-negative", s.id));
            }
            if !(s.prob > 0.0 && s.prob <= 1.0 + PROB_TOL) {
                errors.push(format!("node {}: probability {} outside (0, 1]", s.id, s.prob));
            }
        }
        match roots.as_slice() {
            [r] => {
                let s = &specs[*r];
                if s.time != 0 {
                    errors.push(format!("node {}: root must have time 0", s.id));
                }
                if (s.prob - 1.0).abs() > PROB_TOL {
                    errors.push(format!("node {}: root probability must be 1", s.id));
                }
            }
            [] => errors.push("no root node (parent: null)".to_string()),
            many => errors.push(format!(
                "{} root nodes: {:?}",
                many.len(),
                many.iter().map(|&i| specs[i].id).collect::<Vec<_>>()
            )),
        }

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); specs.len()];
        for (ix, p) in parent_ix.iter().enumerate() {
            if let Some(p) = *p {
                if specs[ix].time != specs[p].time + 1 {
                    errors.push(format!(
                        "node {}: time {} is not parent time {} + 1",
                        specs[ix].id, specs[ix].time, specs[p].time
                    ));
                }
                children[p].push(ix);
            }
        }
        for c in &mut children {
            c.sort_by_key(|&i| specs[i].id);
        }
        for (ix, c) in children.iter().enumerate() {
            if c.is_empty() {
                continue;
            }
            let total: f64 = c.iter().map(|&k| specs[k].prob).sum();
            if (total - 1.0).abs() > PROB_TOL {
                errors.push(format!(
                    "node {}: child probabilities sum to {} ≠ 1",
                    specs[ix].id, total
                ));
            }
        }
        let horizon = specs.iter().map(|s| s.time).max().unwrap_or(0);
        if horizon == 0 {
            errors.push("horizon must be at least 1".to_string());
        }
        for (ix, s) in specs.iter().enumerate() {
            if children[ix].is_empty() && s.time != horizon {
                errors.push(format!(
                    "node {}: leaf at time {} but horizon is {}",
                    s.id, s.time, horizon
                ));
            }
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }

        let mut slices: Vec<Vec<usize>> = vec![Vec::new(); horizon + 1];
        for (ix, s) in specs.iter().enumerate() {
            slices[s.time].push(ix);
        }
        for slice in &mut slices {
            slice.sort_by_key(|&i| specs[i].id);
        }
        let mut slot = vec![0; specs.len()];
        for slice in &slices {
            for (k, &ix) in slice.iter().enumerate() {
                slot[ix] = k;
            }
        }
        let nodes = specs
            .into_iter()
            .enumerate()
            .zip(children)
            .map(|((ix, s), children)| Node {
                id: s.id,
                time: s.time,
                parent: parent_ix[ix],
                children,
                cond_prob: s.prob,
                price: s.price,
                slot: slot[ix],
            })
            .collect();
        Ok(Self {
            assets,
            nodes,
            root: roots[0],
            slices,
            index,
        })
    }

    pub fn horizon(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn asset_count(&self) -> usize {
        self.assets.len()
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, ix: usize) -> &Node {
        &self.nodes[ix]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Arena indices of the time-`t` nodes, ordered by id.
    pub fn slice(&self, t: usize) -> &[usize] {
        &self.slices[t]
    }

    pub fn ix(&self, id: NodeId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownNode(id))
    }

    /// Indices of all non-terminal nodes, in time order.
    pub fn internal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.slices[..self.horizon()].iter().flatten().copied()
    }

    /// `ΔS` towards each child: `child.price - node.price`.
    pub fn delta_s(&self, ix: usize) -> Result<Vec<Vec<f64>>> {
        let node = &self.nodes[ix];
        if node.is_leaf() {
            return Err(Error::NotAParent(node.id));
        }
        Ok(node
            .children
            .iter()
            .map(|&c| {
                self.nodes[c]
                    .price
                    .iter()
                    .zip(&node.price)
                    .map(|(a, b)| a - b)
                    .collect()
            })
            .collect())
    }

    pub fn child_probs(&self, ix: usize) -> Vec<f64> {
        self.nodes[ix]
            .children
            .iter()
            .map(|&c| self.nodes[c].cond_prob)
            .collect()
    }

    /// Product of conditional probabilities along the path from the root.
    pub fn unconditional_probability(&self, ix: usize) -> f64 {
        let mut p = 1.0;
        let mut cur = Some(ix);
        while let Some(i) = cur {
            p *= self.nodes[i].cond_prob;
            cur = self.nodes[i].parent;
        }
        p
    }

    /// Ancestor of `ix` at time `t` (the node itself when `t` equals its time).
    pub fn ancestor_at(&self, ix: usize, t: usize) -> usize {
        let mut cur = ix;
        while self.nodes[cur].time > t {
            cur = self.nodes[cur].parent.expect("non-root has a parent");
        }
        cur
    }

    /// Leaves below `ix`, in slice order.
    pub fn leaves_under(&self, ix: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![ix];
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i];
            if n.is_leaf() {
                out.push(i);
            } else {
                stack.extend(n.children.iter().rev());
            }
        }
        out
    }

    /// Copy of the tree with a translated price vector on every node.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut t = self.clone();
        for n in &mut t.nodes {
            for (p, s) in n.price.iter_mut().zip(shift) {
                *p += s;
            }
        }
        t
    }

    /// Copy of the tree with the prices of `ix` and its whole subtree moved
    /// by `shift`, which changes only the increments out of the parent.
    pub fn with_subtree_shift(&self, ix: usize, shift: &[f64]) -> Self {
        let mut t = self.clone();
        let mut stack = vec![ix];
        while let Some(i) = stack.pop() {
            for (p, s) in t.nodes[i].price.iter_mut().zip(shift) {
                *p += s;
            }
            stack.extend(t.nodes[i].children.iter().copied());
        }
        t
    }

    /// Node descriptions in arena order, the inverse of [`ScenarioTree::new`].
    pub fn node_specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id,
                time: n.time,
                parent: n.parent.map(|p| self.nodes[p].id),
                prob: n.cond_prob,
                price: n.price.clone(),
            })
            .collect()
    }
}

/// A value per node of one time slice, i.e. an `F_u`-measurable variable.
/// `values[k]` belongs to `tree.slice(time)[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFunction<T = f64> {
    pub time: usize,
    pub values: Vec<T>,
}

impl<T: Clone> NodeFunction<T> {
    pub fn new(tree: &ScenarioTree, time: usize, values: Vec<T>) -> Result<Self> {
        if time > tree.horizon() {
            return Err(Error::InvalidSpec(format!("time {time} beyond horizon")));
        }
        if values.len() != tree.slice(time).len() {
            return Err(Error::InvalidSpec(format!(
                "{} values for {} time-{} nodes",
                values.len(),
                tree.slice(time).len(),
                time
            )));
        }
        Ok(Self { time, values })
    }

    pub fn constant(tree: &ScenarioTree, time: usize, value: T) -> Self {
        Self {
            time,
            values: vec![value; tree.slice(time).len()],
        }
    }

    pub fn from_fn(tree: &ScenarioTree, time: usize, mut f: impl FnMut(usize) -> T) -> Self {
        Self {
            time,
            values: tree.slice(time).iter().map(|&ix| f(ix)).collect(),
        }
    }

    pub fn at(&self, tree: &ScenarioTree, ix: usize) -> &T {
        debug_assert_eq!(tree.node(ix).time, self.time);
        &self.values[tree.node(ix).slot]
    }

    /// The same variable seen as `F_u`-measurable for a later `u`.
    pub fn lift(&self, tree: &ScenarioTree, u: usize) -> Self {
        assert!(u >= self.time, "cannot lift to an earlier time");
        Self::from_fn(tree, u, |ix| self.at(tree, tree.ancestor_at(ix, self.time)).clone())
    }

    /// Values keyed by external node id.
    pub fn to_map(&self, tree: &ScenarioTree) -> BTreeMap<NodeId, T> {
        tree.slice(self.time)
            .iter()
            .zip(&self.values)
            .map(|(&ix, v)| (tree.node(ix).id, v.clone()))
            .collect()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> NodeFunction<U> {
        NodeFunction {
            time: self.time,
            values: self.values.iter().map(f).collect(),
        }
    }
}

impl NodeFunction<f64> {
    /// Builds from values keyed by node id; the keys must be exactly the
    /// time-`time` nodes.
    pub fn from_map(tree: &ScenarioTree, time: usize, values: &BTreeMap<NodeId, f64>) -> Result<Self> {
        if time > tree.horizon() {
            return Err(Error::Validation(vec![format!("payoff time {time} beyond horizon")]));
        }
        let mut errors = Vec::new();
        for id in values.keys() {
            match tree.ix(*id) {
                Ok(ix) if tree.node(ix).time == time => {}
                Ok(_) => errors.push(format!("node {id}: not a time-{time} node")),
                Err(_) => errors.push(format!("node {id}: unknown")),
            }
        }
        let mut out = Vec::with_capacity(tree.slice(time).len());
        for &ix in tree.slice(time) {
            let id = tree.node(ix).id;
            match values.get(&id) {
                Some(v) if v.is_finite() => out.push(*v),
                Some(_) => errors.push(format!("node {id}: value must be finite")),
                None => errors.push(format!("node {id}: missing value")),
            }
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        Ok(Self { time, values: out })
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.time, other.time);
        Self {
            time: self.time,
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn zip_map<U>(&self, other: &Self, f: impl Fn(f64, f64) -> U) -> NodeFunction<U> {
        assert_eq!(self.time, other.time);
        NodeFunction {
            time: self.time,
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| k * v)
    }

    pub fn neg(&self) -> Self {
        self.map(|v| -v)
    }

    pub fn is_minus_infinity(&self, k: usize) -> bool {
        self.values[k] == f64::NEG_INFINITY
    }
}

/// European claim paying `values` at `maturity`.
#[derive(Debug, Clone, PartialEq)]
pub struct Payoff {
    pub maturity: usize,
    pub values: NodeFunction,
}

impl Payoff {
    pub fn new(values: NodeFunction) -> Self {
        Self {
            maturity: values.time,
            values,
        }
    }

    /// Call on asset `asset` struck at `strike`, paid at the horizon.
    pub fn call(tree: &ScenarioTree, asset: usize, strike: f64) -> Self {
        let t = tree.horizon();
        Self::new(NodeFunction::from_fn(tree, t, |ix| {
            (tree.node(ix).price[asset] - strike).max(0.0)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn binomial() -> ScenarioTree {
        ScenarioTree::new(
            vec!["S".into()],
            vec![
                NodeSpec { id: 0, time: 0, parent: None, prob: 1.0, price: vec![1.0] },
                NodeSpec { id: 1, time: 1, parent: Some(0), prob: 0.5, price: vec![2.0] },
                NodeSpec { id: 2, time: 1, parent: Some(0), prob: 0.5, price: vec![0.5] },
            ],
        )
        .unwrap()
    }

    fn trinomial() -> ScenarioTree {
        let third = 1.0 / 3.0;
        ScenarioTree::new(
            vec!["S".into()],
            vec![
                NodeSpec { id: 0, time: 0, parent: None, prob: 1.0, price: vec![1.0] },
                NodeSpec { id: 1, time: 1, parent: Some(0), prob: third, price: vec![2.0] },
                NodeSpec { id: 2, time: 1, parent: Some(0), prob: third, price: vec![1.0] },
                NodeSpec { id: 3, time: 1, parent: Some(0), prob: third, price: vec![0.5] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn binomial_increments_and_probabilities() {
        let t = binomial();
        assert_eq!(t.len(), 3);
        assert_eq!(t.horizon(), 1);
        assert_eq!(t.delta_s(t.root()).unwrap(), vec![vec![1.0], vec![-0.5]]);
        assert_eq!(t.unconditional_probability(t.ix(1).unwrap()), 0.5);
        assert_eq!(t.unconditional_probability(t.root()), 1.0);
        assert!(matches!(t.delta_s(t.ix(1).unwrap()), Err(Error::NotAParent(1))));
    }

    #[test]
    fn trinomial_increments() {
        let t = trinomial();
        assert_eq!(t.len(), 4);
        assert_eq!(t.delta_s(t.root()).unwrap(), vec![vec![1.0], vec![0.0], vec![-0.5]]);
        assert!((t.unconditional_probability(t.ix(2).unwrap()) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn flat_child_has_zero_increment() {
        let t = ScenarioTree::new(
            vec!["S".into()],
            vec![
                NodeSpec { id: 0, time: 0, parent: None, prob: 1.0, price: vec![3.0] },
                NodeSpec { id: 1, time: 1, parent: Some(0), prob: 1.0, price: vec![3.0] },
            ],
        )
        .unwrap();
        assert_eq!(t.delta_s(t.root()).unwrap(), vec![vec![0.0]]);
    }

    #[test]
    fn bad_probabilities_are_reported() {
        let err = ScenarioTree::new(
            vec!["S".into()],
            vec![
                NodeSpec { id: 0, time: 0, parent: None, prob: 1.0, price: vec![1.0] },
                NodeSpec { id: 1, time: 1, parent: Some(0), prob: 0.6, price: vec![2.0] },
                NodeSpec { id: 2, time: 1, parent: Some(0), prob: 0.6, price: vec![0.5] },
            ],
        )
        .unwrap_err();
        match err {
            Error::Validation(v) => assert!(v.iter().any(|m| m.contains("node 0") && m.contains("sum"))),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn structural_violations_are_collected() {
        let err = ScenarioTree::new(
            vec!["S".into()],
            vec![
                NodeSpec { id: 0, time: 0, parent: None, prob: 1.0, price: vec![1.0] },
                NodeSpec { id: 1, time: 1, parent: Some(0), prob: 0.5, price: vec![2.0] },
                NodeSpec { id: 2, time: 1, parent: Some(0), prob: 0.5, price: vec![-0.5] },
                NodeSpec { id: 3, time: 2, parent: Some(1), prob: 1.0, price: vec![2.0] },
                NodeSpec { id: 4, time: 3, parent: Some(9), prob: 1.0, price: vec![2.0] },
            ],
        )
        .unwrap_err();
        let Error::Validation(v) = err else { panic!() };
        assert!(v.iter().any(|m| m.contains("node 2") && m.contains("non-negative")));
        assert!(v.iter().any(|m| m.contains("unknown parent 9")));
        assert!(v.iter().any(|m| m.contains("node 2: leaf at time 1")));
    }

    #[test]
    fn ragged_leaves_rejected() {
        let err = ScenarioTree::new(
            vec!["S".into()],
            vec![
                NodeSpec { id: 0, time: 0, parent: None, prob: 1.0, price: vec![1.0] },
                NodeSpec { id: 1, time: 1, parent: Some(0), prob: 0.5, price: vec![2.0] },
                NodeSpec { id: 2, time: 1, parent: Some(0), prob: 0.5, price: vec![0.5] },
                NodeSpec { id: 3, time: 2, parent: Some(1), prob: 1.0, price: vec![2.0] },
            ],
        )
        .unwrap_err();
        let Error::Validation(v) = err else { panic!() };
        assert!(v.iter().any(|m| m.contains("node 2: leaf at time 1")));
    }

    #[test]
    fn lift_copies_ancestor_values() {
        let t = binomial();
        let f = NodeFunction::constant(&t, 0, 7.0);
        assert_eq!(f.lift(&t, 1).values, vec![7.0, 7.0]);
    }

    #[test]
    fn node_function_from_map_checks_domain() {
        let t = binomial();
        let mut m = BTreeMap::new();
        m.insert(1, 1.0);
        assert!(NodeFunction::from_map(&t, 1, &m).is_err());
        m.insert(2, 0.0);
        assert_eq!(NodeFunction::from_map(&t, 1, &m).unwrap().values, vec![1.0, 0.0]);
        m.insert(0, 0.0);
        assert!(NodeFunction::from_map(&t, 1, &m).is_err());
    }
}
