//! Random model generators for property tests and benches.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::Model;
use crate::risk::{build_one_step, LocalMeasure, RiskMeasureSpec};
use crate::settings::Settings;
use crate::tree::{NodeFunction, NodeSpec, Payoff, ScenarioTree};

#[derive(Debug, Clone, Copy)]
pub struct TreeShape {
    pub max_horizon: usize,
    pub max_assets: usize,
    pub max_children: usize,
    pub node_budget: usize,
}

impl Default for TreeShape {
    fn default() -> Self {
        Self { max_horizon: 4, max_assets: 3, max_children: 5, node_budget: 120 }
    }
}

/// Random skeleton with placeholder prices. Every leaf sits at the horizon.
fn skeleton(rng: &mut impl Rng, shape: &TreeShape, d: usize) -> Vec<NodeSpec> {
    let horizon = rng.gen_range(1..=shape.max_horizon);
    let mut nodes = vec![NodeSpec { id: 0, time: 0, parent: None, prob: 1.0, price: vec![1.0; d] }];
    let mut frontier = vec![0u64];
    for t in 1..=horizon {
        let levels = horizon - t + 1;
        let mut next = Vec::new();
        for (k, &parent) in frontier.iter().enumerate() {
            // keep room for at least two children per remaining frontier node
            let left = frontier.len() - k;
            let room = shape.node_budget.saturating_sub(nodes.len()) / (left * levels);
            let hi = shape.max_children.min(room).max(2);
            let m = rng.gen_range(2..=hi);
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = w.iter().sum();
            for wj in w {
                let id = nodes.len() as u64;
                nodes.push(NodeSpec { id, time: t, parent: Some(parent), prob: wj / total, price: vec![1.0; d] });
                next.push(id);
            }
        }
        frontier = next;
    }
    nodes
}

fn positive_kernel(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn random_spec(rng: &mut impl Rng, tree: &ScenarioTree) -> RiskMeasureSpec {
    let mut spec = if rng.gen_bool(0.5) {
        RiskMeasureSpec::cvar(rng.gen_range(0.3..=1.0))
    } else if rng.gen_bool(0.5) {
        RiskMeasureSpec::worst_case()
    } else {
        RiskMeasureSpec::cvar(rng.gen_range(0.05..0.3))
    };
    for ix in tree.internal_nodes() {
        if !rng.gen_bool(0.3) {
            continue;
        }
        let m = tree.node(ix).children.len();
        let local = match rng.gen_range(0..3) {
            0 => LocalMeasure::WorstCase,
            1 => LocalMeasure::Cvar { alpha: rng.gen_range(0.1..=1.0) },
            _ => LocalMeasure::Kernels {
                kernels: (0..rng.gen_range(1..=3)).map(|_| positive_kernel(rng, m)).collect(),
            },
        };
        spec = spec.with_override(tree.node(ix).id, local);
    }
    spec
}

fn random_payoff(rng: &mut impl Rng, tree: &ScenarioTree) -> Payoff {
    let h = tree.horizon();
    if rng.gen_bool(0.5) {
        let asset = rng.gen_range(0..tree.asset_count());
        Payoff::call(tree, asset, rng.gen_range(0.6..1.4))
    } else {
        Payoff::new(NodeFunction::from_fn(tree, h, |_| rng.gen_range(0.0..2.0)))
    }
}

/// Random market satisfying NA under a random mix of worst-case, CVaR and
/// kernel measures. Increments are centred under the barycenter of each
/// node's dual vertices, which gives a strictly positive mixing at every
/// node.
pub fn random_na_model(rng: &mut impl Rng, shape: &TreeShape) -> Model {
    let d = rng.gen_range(1..=shape.max_assets);
    let assets: Vec<String> = (0..d).map(|k| format!("S{k}")).collect();
    let mut specs = skeleton(rng, shape, d);
    let draft = ScenarioTree::new(assets.clone(), specs.clone()).expect("valid skeleton");
    let risk = random_spec(rng, &draft);
    let settings = Settings::default();

    for k in 0..d {
        specs[0].price[k] = rng.gen_range(0.5..2.0);
    }
    for ix in draft.internal_nodes() {
        let step = build_one_step(&draft, &risk, ix, &settings).expect("valid measure");
        let m = step.child_count();
        let k = step.dual_vertices.len() as f64;
        let bary: Vec<f64> =
            (0..m).map(|j| step.dual_vertices.iter().map(|q| q[j]).sum::<f64>() / k).collect();
        let parent = draft.node(ix).id as usize;
        let s = specs[parent].price.clone();
        let children: Vec<usize> = draft.node(ix).children.iter().map(|&c| draft.node(c).id as usize).collect();
        for a in 0..d {
            let u: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.4..=0.4)).collect();
            let mean: f64 = u.iter().zip(&bary).map(|(x, q)| x * q).sum();
            for (j, &c) in children.iter().enumerate() {
                specs[c].price[a] = s[a] * (1.0 + u[j] - mean);
            }
        }
    }
    let tree = ScenarioTree::new(assets, specs).expect("valid tree");
    let payoff = random_payoff(rng, &tree);
    Model { tree, risk, payoff: Some(payoff) }
}

/// Worst-case market whose increments are drawn from a coarse grid, so that
/// arbitrage and degenerate nodes are frequent.
pub fn random_grid_model(rng: &mut impl Rng, shape: &TreeShape) -> Model {
    const GRID: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let d = rng.gen_range(1..=shape.max_assets);
    let assets: Vec<String> = (0..d).map(|k| format!("S{k}")).collect();
    let mut specs = skeleton(rng, shape, d);
    for i in 1..specs.len() {
        let parent = specs[i].parent.expect("non-root") as usize;
        let s = specs[parent].price.clone();
        for a in 0..d {
            specs[i].price[a] = s[a] * (1.0 + 0.3 * GRID.choose(rng).expect("nonempty"));
        }
    }
    let tree = ScenarioTree::new(assets, specs).expect("valid tree");
    let payoff = random_payoff(rng, &tree);
    Model { tree, risk: RiskMeasureSpec::worst_case(), payoff: Some(payoff) }
}

/// Breaks AIP at one random internal node by lifting every child subtree
/// above the largest increment, so that all children gain in the first
/// asset. Returns the mutated model and the arena index of the node.
pub fn break_aip(rng: &mut impl Rng, model: &Model) -> (Model, usize) {
    let internal: Vec<usize> = model.tree.internal_nodes().collect();
    let ix = *internal.choose(rng).expect("internal node");
    let delta = model.tree.delta_s(ix).expect("internal");
    let spread = delta.iter().map(|v| v[0].abs()).fold(0.0, f64::max);
    let mut shift = vec![0.0; model.tree.asset_count()];
    shift[0] = spread + rng.gen_range(0.05..0.5);
    let mut tree = model.tree.clone();
    for &c in &model.tree.node(ix).children {
        tree = tree.with_subtree_shift(c, &shift);
    }
    (Model { tree, ..model.clone() }, ix)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::arbitrage::{check_aip, check_na};
    use crate::risk::DynamicRiskMeasure;

    #[test]
    fn generated_models_satisfy_na() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            let m = random_na_model(&mut rng, &TreeShape::default());
            assert!(m.tree.len() <= 200);
            assert!(m.tree.leaves_under(m.tree.root()).iter().all(|&l| m.tree.node(l).time == m.tree.horizon()));
            let drm = DynamicRiskMeasure::build(&m.tree, &m.risk, Settings::default()).unwrap();
            assert!(check_na(&drm, None).unwrap().holds);
        }
    }

    #[test]
    fn mutation_breaks_aip_at_the_chosen_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let m = random_na_model(&mut rng, &TreeShape::default());
            let (bad, ix) = break_aip(&mut rng, &m);
            let drm = DynamicRiskMeasure::build(&bad.tree, &bad.risk, Settings::default()).unwrap();
            for j in bad.tree.internal_nodes() {
                assert_eq!(check_aip(&drm, j).unwrap().0, j != ix);
            }
        }
    }

    #[test]
    fn grid_models_are_mixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let shape = TreeShape { max_horizon: 2, max_children: 4, node_budget: 40, ..TreeShape::default() };
        let verdicts: Vec<bool> = (0..60)
            .map(|_| {
                let m = random_grid_model(&mut rng, &shape);
                let drm = DynamicRiskMeasure::build(&m.tree, &m.risk, Settings::default()).unwrap();
                check_na(&drm, None).unwrap().holds
            })
            .collect();
        assert!(verdicts.iter().any(|&v| v) && verdicts.iter().any(|&v| !v));
    }
}
