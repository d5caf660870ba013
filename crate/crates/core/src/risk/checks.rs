use serde::Serialize;

use super::DynamicRiskMeasure;
use crate::error::Result;
use crate::lp::{self, LpProblem};
use crate::settings::Settings;
use crate::tree::{NodeFunction, NodeId};

/// One draw for the axiom checks: `X`, `X'` at the same time, a cash amount
/// `m` and a scale `k ≥ 0`.
#[derive(Debug, Clone)]
pub struct CoherenceSample {
    pub x: NodeFunction,
    pub x_prime: NodeFunction,
    pub m: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub axiom: &'static str,
    pub node: NodeId,
    pub sample: usize,
    pub excess: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub checks: usize,
    pub max_excess: f64,
    pub violations: Vec<Violation>,
}

impl CoherenceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn record(&mut self, axiom: &'static str, node: NodeId, sample: usize, excess: f64, tol: f64) {
        self.checks += 1;
        self.max_excess = self.max_excess.max(excess);
        if excess > tol {
            self.violations.push(Violation { axiom, node, sample, excess });
        }
    }
}

/// Normalization, monotonicity, cash invariance, subadditivity and positive
/// homogeneity of `ρ_t`, nodewise on every sample.
pub fn check_coherence_axioms(
    drm: &DynamicRiskMeasure,
    samples: &[CoherenceSample],
    t: usize,
) -> Result<CoherenceReport> {
    let tree = drm.tree();
    let tol = drm.settings().tol;
    let mut report = CoherenceReport::default();
    for (s, sample) in samples.iter().enumerate() {
        let u = sample.x.time;
        let rho = |x: &NodeFunction| drm.rho(x, t);
        let zero = rho(&NodeFunction::constant(tree, u, 0.0))?;
        let rx = rho(&sample.x)?;
        let rxp = rho(&sample.x_prime)?;
        let upper = sample.x.zip_with(&sample.x_prime, f64::max);
        let r_upper = rho(&upper)?;
        let r_cash = rho(&sample.x.map(|v| v + sample.m))?;
        let r_sum = rho(&sample.x.zip_with(&sample.x_prime, |a, b| a + b))?;
        let r_scaled = rho(&sample.x.scale(sample.k))?;
        for (k, &ix) in tree.slice(t).iter().enumerate() {
            let id = tree.node(ix).id;
            report.record("normalization", id, s, zero.values[k].abs(), tol);
            // X ≤ max(X, X') so ρ(max(X, X')) ≤ ρ(X)
            report.record("monotonicity", id, s, r_upper.values[k] - rx.values[k], tol);
            report.record(
                "cash_invariance",
                id,
                s,
                (r_cash.values[k] - (rx.values[k] - sample.m)).abs(),
                tol * (1.0 + sample.m.abs()),
            );
            report.record(
                "subadditivity",
                id,
                s,
                r_sum.values[k] - rx.values[k] - rxp.values[k],
                tol,
            );
            report.record(
                "positive_homogeneity",
                id,
                s,
                (r_scaled.values[k] - sample.k * rx.values[k]).abs(),
                tol * (1.0 + sample.k),
            );
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TimeConsistencyReport {
    pub checks: usize,
    /// Largest `|ρ_t(−ρ_{t+1}(X)) − ρ_t(X)|`.
    pub max_recursion_gap: f64,
    /// Largest `|ρ_t(X) − ρ_t(Y)|` over pairs with `ρ_{t+1}(X) = ρ_{t+1}(Y)`.
    pub max_implication_gap: f64,
}

impl TimeConsistencyReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_recursion_gap <= tol && self.max_implication_gap <= tol
    }
}

/// Checks the recursion identity for every `t < u` and the defining
/// implication on the pair `(X, Y)` with `Y` the `F_{t+1}`-measurable
/// variable `−ρ_{t+1}(X)`.
pub fn check_time_consistency(drm: &DynamicRiskMeasure, samples: &[NodeFunction]) -> Result<TimeConsistencyReport> {
    let tree = drm.tree();
    let mut report = TimeConsistencyReport::default();
    for x in samples {
        for t in 0..x.time {
            let next = drm.rho(x, t + 1)?;
            let direct = drm.rho(x, t)?;
            let composed = drm.rho(&next.neg(), t)?;
            let y = next.neg().lift(tree, x.time);
            let ry_next = drm.rho(&y, t + 1)?;
            let ry = drm.rho(&y, t)?;
            for k in 0..direct.values.len() {
                report.checks += 1;
                report.max_recursion_gap = report
                    .max_recursion_gap
                    .max((composed.values[k] - direct.values[k]).abs());
                report.max_implication_gap = report.max_implication_gap.max((ry.values[k] - direct.values[k]).abs());
            }
            debug_assert!(ry_next
                .values
                .iter()
                .zip(&next.values)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs())));
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeReport {
    /// Every unit vector is a nonnegative combination of the generators.
    pub contains_orthant: bool,
    /// First unit vector outside the cone.
    pub missing_unit: Option<usize>,
    /// The cone meets the nonpositive orthant only at zero.
    pub no_free_lunch: bool,
    /// Nonzero nonpositive point of the cone, when one exists.
    pub negative_point: Option<Vec<f64>>,
}

impl ConeReport {
    pub fn is_valid(&self) -> bool {
        self.contains_orthant && self.no_free_lunch
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if let Some(j) = self.missing_unit {
            parts.push(format!("unit vector e_{j} is not in the cone"));
        }
        if let Some(p) = &self.negative_point {
            parts.push(format!("cone contains the nonpositive point {p:?}"));
        }
        if parts.is_empty() {
            "valid".into()
        } else {
            parts.join("; ")
        }
    }
}

pub fn validate_acceptance_cone(generators: &[Vec<f64>], settings: &Settings) -> Result<ConeReport> {
    let k = generators.len();
    let m = generators.first().map_or(0, Vec::len);
    let opts = settings.lp();
    let mut missing_unit = None;
    for j in 0..m {
        let mut lp = LpProblem::new(k);
        for i in 0..m {
            lp.add_eq(generators.iter().map(|g| g[i]).collect(), if i == j { 1.0 } else { 0.0 });
        }
        if lp::solve(&lp, &opts)?.solution().is_none() {
            missing_unit = Some(j);
            break;
        }
    }
    // λ ≥ 0 with Σλg ≤ 0 componentwise and coordinate sum ≤ −1
    let mut lp = LpProblem::new(k);
    for i in 0..m {
        lp.add_le(generators.iter().map(|g| g[i]).collect(), 0.0);
    }
    lp.add_le(generators.iter().map(|g| g.iter().sum()).collect(), -1.0);
    let negative_point = lp::solve(&lp, &opts)?.solution().map(|s| {
        (0..m)
            .map(|i| generators.iter().zip(&s.primal_point).map(|(g, l)| g[i] * l).sum())
            .collect()
    });
    Ok(ConeReport {
        contains_orthant: missing_unit.is_none(),
        missing_unit,
        no_free_lunch: negative_point.is_none(),
        negative_point,
    })
}
