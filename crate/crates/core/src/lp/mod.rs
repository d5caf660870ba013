//! Dense linear programming.
//!
//! Every essinf/esssup on the tree reduces to a small LP. The solver is a
//! bounded-variable primal simplex on a dense tableau with Bland's
//! smallest-index rule, so it terminates on degenerate instances. An exact
//! mode reruns the same algorithm over arbitrary-precision rationals.

mod scalar;
mod simplex;

use num_rational::BigRational;
use serde::Serialize;

use crate::error::{Error, Result};

/// Pivoting rule used to choose entering variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PivotRule {
    /// Smallest eligible index for the entering variable. The leaving
    /// variable is the smallest-index tie in exact mode and the largest
    /// pivot within the tolerance in floating point.
    #[default]
    Bland,
    /// Most negative reduced cost; falls back to Bland permanently after a
    /// run of degenerate pivots.
    Dantzig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub tol: f64,
    pub exact: bool,
    pub pivot: PivotRule,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            exact: false,
            pivot: PivotRule::Bland,
        }
    }
}

/// `minimize c·x` subject to `A x ≤ b`, `E x = f`, `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub ineq_lhs: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
    pub eq_lhs: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
}

impl LpProblem {
    /// A problem in `n` non-negative variables with a zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            ineq_lhs: Vec::new(),
            ineq_rhs: Vec::new(),
            eq_lhs: Vec::new(),
            eq_rhs: Vec::new(),
            lower_bounds: vec![0.0; n],
            upper_bounds: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn minimize(mut self, objective: Vec<f64>) -> Self {
        self.objective = objective;
        self
    }

    pub fn set_objective(&mut self, j: usize, c: f64) {
        self.objective[j] = c;
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower_bounds[j] = lower;
        self.upper_bounds[j] = upper;
    }

    pub fn set_free(&mut self, j: usize) {
        self.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.ineq_lhs.push(row);
        self.ineq_rhs.push(rhs);
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) {
        self.add_le(row.into_iter().map(|a| -a).collect(), -rhs);
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_lhs.push(row);
        self.eq_rhs.push(rhs);
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let bad = |msg: String| Err(Error::MalformedProblem(msg));
        if n == 0 {
            return bad("no variables".into());
        }
        if self.ineq_lhs.len() != self.ineq_rhs.len() {
            return bad("inequality row count differs from rhs length".into());
        }
        if self.eq_lhs.len() != self.eq_rhs.len() {
            return bad("equality row count differs from rhs length".into());
        }
        if self.lower_bounds.len() != n || self.upper_bounds.len() != n {
            return bad("bound vectors do not match variable count".into());
        }
        for (i, row) in self.ineq_lhs.iter().chain(&self.eq_lhs).enumerate() {
            if row.len() != n {
                return bad(format!("row {i} has {} entries, expected {n}", row.len()));
            }
            if row.iter().any(|a| !a.is_finite()) {
                return bad(format!("row {i} has a non-finite coefficient"));
            }
        }
        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        if !finite(&self.objective) || !finite(&self.ineq_rhs) || !finite(&self.eq_rhs) {
            return bad("non-finite objective or right-hand side".into());
        }
        for j in 0..n {
            let (lo, hi) = (self.lower_bounds[j], self.upper_bounds[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY
            {
                return bad(format!("variable {j} has inconsistent bounds [{lo}, {hi}]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub primal_point: Vec<f64>,
    pub value: f64,
    /// Multipliers `y` with `c - Mᵀy` equal to the reduced costs; inequality
    /// rows first, then equality rows. Inequality multipliers are `≤ 0`.
    pub dual_point: Vec<f64>,
    /// Some non-fixed nonbasic variable has a zero reduced cost, so the
    /// optimal face may be larger than a vertex.
    pub alternative_optima: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    /// `ray` is a recession direction with `objective·ray < 0`.
    Unbounded { ray: Vec<f64> },
    Infeasible,
}

impl LpOutcome {
    pub fn status(&self) -> LpStatus {
        match self {
            LpOutcome::Optimal(_) => LpStatus::Optimal,
            LpOutcome::Unbounded { .. } => LpStatus::Unbounded,
            LpOutcome::Infeasible => LpStatus::Infeasible,
        }
    }

    pub fn solution(&self) -> Option<&LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.solution().map(|s| s.value)
    }
}

pub fn solve(problem: &LpProblem, options: &LpOptions) -> Result<LpOutcome> {
    if !(options.tol > 0.0) {
        return Err(Error::MalformedProblem(format!("tolerance {} must be positive", options.tol)));
    }
    problem.validate()?;
    let raw = if options.exact {
        simplex::run::<BigRational>(problem, options)?
    } else {
        simplex::run::<f64>(problem, options)?
    };
    Ok(match raw {
        simplex::Raw::Optimal { x, dual, alternative_optima } => {
            let value = dot(&problem.objective, &x);
            LpOutcome::Optimal(LpSolution {
                primal_point: x,
                value,
                dual_point: dual,
                alternative_optima,
            })
        }
        simplex::Raw::Unbounded { ray } => LpOutcome::Unbounded { ray },
        simplex::Raw::Infeasible => LpOutcome::Infeasible,
    })
}

/// Objective of the Lagrangian dual at multipliers `y`, maximized over the
/// bound multipliers. `None` when `y` is dual infeasible beyond `tol`
/// (wrong sign on an inequality row, or a reduced cost pushing against an
/// infinite bound).
pub fn dual_objective(problem: &LpProblem, y: &[f64], tol: f64) -> Option<f64> {
    let m = problem.ineq_rhs.len();
    if y.len() != m + problem.eq_rhs.len() {
        return None;
    }
    if y[..m].iter().any(|&v| v > tol) {
        return None;
    }
    let mut value = dot(&problem.ineq_rhs, &y[..m]) + dot(&problem.eq_rhs, &y[m..]);
    for j in 0..problem.num_vars() {
        let mut r = problem.objective[j];
        for (row, yi) in problem.ineq_lhs.iter().chain(&problem.eq_lhs).zip(y) {
            r -= row[j] * yi;
        }
        let scale = tol * (1.0 + problem.objective[j].abs());
        if r > scale {
            let lo = problem.lower_bounds[j];
            if !lo.is_finite() {
                return None;
            }
            value += lo * r;
        } else if r < -scale {
            let hi = problem.upper_bounds[j];
            if !hi.is_finite() {
                return None;
            }
            value += hi * r;
        }
    }
    Some(value)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
