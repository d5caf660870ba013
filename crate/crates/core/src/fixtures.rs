//! Small hand-checkable markets.

use crate::tree::{NodeSpec, ScenarioTree};

fn spec(id: u64, time: usize, parent: Option<u64>, prob: f64, price: Vec<f64>) -> NodeSpec {
    NodeSpec { id, time, parent, prob, price }
}

/// One period, single asset, from `s0` to each of `children` with equal
/// probabilities.
pub fn one_period(s0: f64, children: &[f64]) -> ScenarioTree {
    let p = 1.0 / children.len() as f64;
    let mut nodes = vec![spec(0, 0, None, 1.0, vec![s0])];
    for (k, &s) in children.iter().enumerate() {
        nodes.push(spec(k as u64 + 1, 1, Some(0), p, vec![s]));
    }
    ScenarioTree::new(vec!["S".into()], nodes).expect("valid one-period tree")
}

/// `S0 = 1`, `S1 ∈ {2, 0.5}`, equal probabilities.
pub fn binomial() -> ScenarioTree {
    one_period(1.0, &[2.0, 0.5])
}

/// `S0 = 1`, `S1 ∈ {2, 1, 0.5}`, equal probabilities.
pub fn trinomial() -> ScenarioTree {
    one_period(1.0, &[2.0, 1.0, 0.5])
}

/// Recombining-in-value binomial over `periods` steps: up ×2, down ×0.5.
pub fn multi_period_binomial(periods: usize) -> ScenarioTree {
    let mut nodes = vec![spec(0, 0, None, 1.0, vec![1.0])];
    let mut frontier = vec![(0u64, 1.0)];
    let mut next_id = 1;
    for t in 1..=periods {
        let mut next = Vec::new();
        for &(parent, s) in &frontier {
            for f in [2.0, 0.5] {
                nodes.push(spec(next_id, t, Some(parent), 0.5, vec![s * f]));
                next.push((next_id, s * f));
                next_id += 1;
            }
        }
        frontier = next;
    }
    ScenarioTree::new(vec!["S".into()], nodes).expect("valid binomial tree")
}

/// Deterministic single-path market with the given prices.
pub fn deterministic(prices: &[f64]) -> ScenarioTree {
    let nodes = prices
        .iter()
        .enumerate()
        .map(|(t, &s)| {
            let parent = if t == 0 { None } else { Some(t as u64 - 1) };
            spec(t as u64, t, parent, 1.0, vec![s])
        })
        .collect();
    ScenarioTree::new(vec!["S".into()], nodes).expect("valid path")
}
