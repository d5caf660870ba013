use super::scalar::Scalar;
use super::{LpOptions, LpProblem, PivotRule};
use crate::error::{Error, Result};

/// Degenerate pivots tolerated under Dantzig pricing before switching to
/// Bland's rule for the remainder of the solve.
const DEGENERATE_RUN: usize = 50;

/// Pivots between reinversions in floating point.
const REINVERSION_PERIOD: usize = 100;

pub(crate) enum Raw {
    Optimal {
        x: Vec<f64>,
        dual: Vec<f64>,
        alternative_optima: bool,
    },
    Unbounded {
        ray: Vec<f64>,
    },
    Infeasible,
}

enum Step {
    Optimal,
    Unbounded { entering: usize, dir: i8 },
}

/// Column layout: original variables, one slack per inequality row, one
/// artificial per row. The artificial block doubles as a record of `B⁻¹`,
/// which is how the dual multipliers are read off at the end.
struct Tableau<T> {
    rows: usize,
    cols: usize,
    t: Vec<T>,
    value: Vec<T>,
    lower: Vec<Option<T>>,
    upper: Vec<Option<T>>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    d: Vec<T>,
    cost: Vec<T>,
    /// Initial rows and right-hand sides, kept for reinversion.
    a0: Vec<T>,
    b0: Vec<T>,
    exact: bool,
    since_reinversion: usize,
    eps: T,
    pivot_eps: T,
    first_artificial: usize,
    rule: PivotRule,
    degenerate_run: usize,
    iterations: usize,
    max_iterations: usize,
}

impl<T: Scalar> Tableau<T> {
    fn at(&self, i: usize, j: usize) -> &T {
        &self.t[i * self.cols + j]
    }

    fn set_cost(&mut self, cost: Vec<T>) {
        self.cost = cost;
        self.refresh_reduced_costs();
    }

    fn refresh_reduced_costs(&mut self) {
        let cost = &self.cost;
        let mut d = cost.clone();
        for i in 0..self.rows {
            let cb = &cost[self.basis[i]];
            if cb.is_zero_exact() {
                continue;
            }
            for (j, dj) in d.iter_mut().enumerate() {
                let a = self.at(i, j);
                if !a.is_zero_exact() {
                    *dj = dj.clone() - cb.clone() * a.clone();
                }
            }
        }
        self.d = d;
    }

    fn can_increase(&self, j: usize) -> bool {
        match &self.upper[j] {
            Some(u) => self.value[j] < *u,
            None => true,
        }
    }

    fn can_decrease(&self, j: usize) -> bool {
        match &self.lower[j] {
            Some(l) => self.value[j] > *l,
            None => true,
        }
    }

    fn eligible(&self, j: usize) -> Option<i8> {
        if self.is_basic[j] {
            return None;
        }
        let dj = &self.d[j];
        if *dj < -self.eps.clone() && self.can_increase(j) {
            Some(1)
        } else if *dj > self.eps && self.can_decrease(j) {
            Some(-1)
        } else {
            None
        }
    }

    fn choose_entering(&self) -> Option<(usize, i8)> {
        let use_bland = self.rule == PivotRule::Bland || self.degenerate_run >= DEGENERATE_RUN;
        if use_bland {
            return (0..self.cols).find_map(|j| self.eligible(j).map(|dir| (j, dir)));
        }
        let mut best: Option<(usize, i8, T)> = None;
        for j in 0..self.cols {
            if let Some(dir) = self.eligible(j) {
                let score = self.d[j].abs();
                if best.as_ref().map_or(true, |(_, _, s)| score > *s) {
                    best = Some((j, dir, score));
                }
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Returns `None` when the step is unbounded, otherwise the step length
    /// and the blocking row (`None` for a bound flip of the entering column).
    fn ratio_test(&self, j: usize, dir: i8) -> Option<(T, Option<usize>)> {
        if !self.exact {
            return self.harris_ratio_test(j, dir);
        }
        let zero = T::zero();
        let mut best: Option<(T, Option<usize>, usize)> = None;
        let offer = |ratio: T, row: Option<usize>, var: usize, best: &mut Option<(T, Option<usize>, usize)>| {
            let ratio = if ratio < zero { zero.clone() } else { ratio };
            let better = match best {
                None => true,
                Some((r, _, v)) => {
                    let tie = (ratio.clone() - r.clone()).abs() <= self.eps;
                    if tie {
                        var < *v
                    } else {
                        ratio < *r
                    }
                }
            };
            if better {
                *best = Some((ratio, row, var));
            }
        };
        if let (Some(l), Some(u)) = (&self.lower[j], &self.upper[j]) {
            offer(u.clone() - l.clone(), None, j, &mut best);
        }
        for i in 0..self.rows {
            let a = self.at(i, j).clone();
            let alpha = if dir > 0 { a } else { -a };
            let b = self.basis[i];
            if alpha > self.pivot_eps {
                if let Some(l) = &self.lower[b] {
                    offer((self.value[b].clone() - l.clone()) / alpha, Some(i), b, &mut best);
                }
            } else if alpha < -self.pivot_eps.clone() {
                if let Some(u) = &self.upper[b] {
                    offer((u.clone() - self.value[b].clone()) / (-alpha), Some(i), b, &mut best);
                }
            }
        }
        best.map(|(r, row, _)| (r, row))
    }

    /// Two-pass ratio test for floating point: bounds are relaxed by the
    /// tolerance to find the admissible step, then the largest pivot within
    /// it is taken.
    fn harris_ratio_test(&self, j: usize, dir: i8) -> Option<(T, Option<usize>)> {
        let zero = T::zero();
        let mut rows: Vec<(usize, T, T)> = Vec::new();
        for i in 0..self.rows {
            let a = self.at(i, j).clone();
            let alpha = if dir > 0 { a } else { -a };
            let b = self.basis[i];
            let room = if alpha > self.pivot_eps {
                self.lower[b].as_ref().map(|l| self.value[b].clone() - l.clone())
            } else if alpha < -self.pivot_eps.clone() {
                self.upper[b].as_ref().map(|u| u.clone() - self.value[b].clone())
            } else {
                None
            };
            if let Some(room) = room {
                let room = if room < zero { zero.clone() } else { room };
                rows.push((i, room, alpha.abs()));
            }
        }
        let flip = match (&self.lower[j], &self.upper[j]) {
            (Some(l), Some(u)) => Some(u.clone() - l.clone()),
            _ => None,
        };
        let relaxed = rows
            .iter()
            .map(|(_, room, a)| (room.clone() + self.eps.clone()) / a.clone())
            .fold(None, |m: Option<T>, r| Some(m.map_or(r.clone(), |m| if r < m { r } else { m })));
        let Some(limit) = relaxed else {
            return flip.map(|f| (f, None));
        };
        if let Some(f) = &flip {
            if *f <= limit {
                return Some((f.clone(), None));
            }
        }
        let mut best: Option<&(usize, T, T)> = None;
        for r in &rows {
            if r.1.clone() / r.2.clone() > limit {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => r.2 > b.2 || (r.2 == b.2 && self.basis[r.0] < self.basis[b.0]),
            };
            if better {
                best = Some(r);
            }
        }
        best.map(|(i, room, a)| (room.clone() / a.clone(), Some(*i)))
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.at(r, j).clone();
        for k in 0..cols {
            let idx = r * cols + k;
            if !self.t[idx].is_zero_exact() {
                self.t[idx] = self.t[idx].clone() / p.clone();
            }
        }
        let pivot_row: Vec<T> = self.t[r * cols..(r + 1) * cols].to_vec();
        let nonzero: Vec<usize> = (0..cols).filter(|&k| !pivot_row[k].is_zero_exact()).collect();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.at(i, j).clone();
            if f.is_zero_exact() {
                continue;
            }
            let base = i * cols;
            for &k in &nonzero {
                self.t[base + k] = self.t[base + k].clone() - f.clone() * pivot_row[k].clone();
            }
            self.t[base + j] = T::zero();
        }
        let f = self.d[j].clone();
        if !f.is_zero_exact() {
            for &k in &nonzero {
                self.d[k] = self.d[k].clone() - f.clone() * pivot_row[k].clone();
            }
            self.d[j] = T::zero();
        }
        let leaving = self.basis[r];
        if leaving >= self.first_artificial {
            self.upper[leaving] = Some(T::zero());
        }
        self.is_basic[leaving] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
    }

    /// Recomputes `B⁻¹A`, the basic values and the reduced costs from the
    /// initial rows. Returns `false` if the basis looks singular.
    fn reinvert(&mut self) -> bool {
        self.since_reinversion = 0;
        let (rows, cols) = (self.rows, self.cols);
        let w = cols + 1;
        let mut m = vec![T::zero(); rows * w];
        for i in 0..rows {
            m[i * w..i * w + cols].clone_from_slice(&self.a0[i * cols..(i + 1) * cols]);
            m[i * w + cols] = self.b0[i].clone();
        }
        let mut owner = vec![usize::MAX; rows];
        let mut used = vec![false; rows];
        for k in 0..rows {
            let col = self.basis[k];
            let Some(p) = (0..rows)
                .filter(|&i| !used[i])
                .max_by(|&a, &b| {
                    m[a * w + col]
                        .abs()
                        .partial_cmp(&m[b * w + col].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
            else {
                return false;
            };
            let piv = m[p * w + col].clone();
            if piv.abs().to_f64() < 1e-12 {
                return false;
            }
            for x in &mut m[p * w..(p + 1) * w] {
                if !x.is_zero_exact() {
                    *x = x.clone() / piv.clone();
                }
            }
            let prow: Vec<T> = m[p * w..(p + 1) * w].to_vec();
            for i in 0..rows {
                let f = m[i * w + col].clone();
                if i == p || f.is_zero_exact() {
                    continue;
                }
                for (x, y) in m[i * w..(i + 1) * w].iter_mut().zip(&prow) {
                    if !y.is_zero_exact() {
                        *x = x.clone() - f.clone() * y.clone();
                    }
                }
                m[i * w + col] = T::zero();
            }
            used[p] = true;
            owner[k] = p;
        }
        for k in 0..rows {
            let p = owner[k];
            self.t[k * cols..(k + 1) * cols].clone_from_slice(&m[p * w..p * w + cols]);
            let mut v = m[p * w + cols].clone();
            for j in 0..cols {
                let a = &self.t[k * cols + j];
                if !self.is_basic[j] && !a.is_zero_exact() && !self.value[j].is_zero_exact() {
                    v = v - a.clone() * self.value[j].clone();
                }
            }
            self.value[self.basis[k]] = v;
        }
        self.refresh_reduced_costs();
        true
    }

    fn iterate(&mut self) -> Result<Step> {
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(Error::NumericalFailure(format!(
                    "iteration limit {} reached",
                    self.max_iterations
                )));
            }
            if !self.exact && self.since_reinversion >= REINVERSION_PERIOD {
                self.reinvert();
            }
            let Some((j, dir)) = self.choose_entering() else {
                if !self.exact && self.since_reinversion > 0 && self.reinvert() {
                    continue;
                }
                return Ok(Step::Optimal);
            };
            let Some((theta, row)) = self.ratio_test(j, dir) else {
                if !self.exact && self.since_reinversion > 0 && self.reinvert() {
                    continue;
                }
                return Ok(Step::Unbounded { entering: j, dir });
            };
            if theta.is_zero_exact() || theta <= self.eps {
                self.degenerate_run += 1;
            } else if self.rule == PivotRule::Dantzig && self.degenerate_run < DEGENERATE_RUN {
                self.degenerate_run = 0;
            }
            let step = if dir > 0 { theta.clone() } else { -theta.clone() };
            if !step.is_zero_exact() {
                for i in 0..self.rows {
                    let a = self.at(i, j).clone();
                    if !a.is_zero_exact() {
                        let b = self.basis[i];
                        self.value[b] = self.value[b].clone() - step.clone() * a;
                    }
                }
                self.value[j] = self.value[j].clone() + step;
            }
            match row {
                None => {
                    // bound flip: snap to the opposite bound exactly
                    self.value[j] = if dir > 0 {
                        self.upper[j].clone().expect("flip needs an upper bound")
                    } else {
                        self.lower[j].clone().expect("flip needs a lower bound")
                    };
                }
                Some(r) => {
                    let leaving = self.basis[r];
                    let a = self.at(r, j).clone();
                    let hits_lower = if dir > 0 { a > T::zero() } else { a < T::zero() };
                    let bound = if hits_lower {
                        self.lower[leaving].clone()
                    } else {
                        self.upper[leaving].clone()
                    };
                    if let Some(b) = bound {
                        self.value[leaving] = b;
                    }
                    self.pivot(r, j);
                    self.since_reinversion += 1;
                }
            }
        }
    }
}

pub(crate) fn run<T: Scalar>(p: &LpProblem, options: &LpOptions) -> Result<Raw> {
    let n = p.num_vars();
    let m = p.ineq_rhs.len();
    let rows = m + p.eq_rhs.len();
    let art0 = n + m;
    let cols = n + m + rows;

    let (eps, pivot_eps) = if options.exact {
        (T::zero(), T::zero())
    } else {
        (T::from_f64(options.tol), T::from_f64(options.tol))
    };
    let bound = |x: f64| if x.is_finite() { Some(T::from_f64(x)) } else { None };

    let mut lower: Vec<Option<T>> = Vec::with_capacity(cols);
    let mut upper: Vec<Option<T>> = Vec::with_capacity(cols);
    for j in 0..n {
        lower.push(bound(p.lower_bounds[j]));
        upper.push(bound(p.upper_bounds[j]));
    }
    for _ in 0..m {
        lower.push(Some(T::zero()));
        upper.push(None);
    }
    for _ in 0..rows {
        lower.push(Some(T::zero()));
        upper.push(Some(T::zero()));
    }

    let mut value: Vec<T> = (0..cols)
        .map(|j| match (&lower[j], &upper[j]) {
            (Some(l), _) => l.clone(),
            (None, Some(u)) => u.clone(),
            (None, None) => T::zero(),
        })
        .collect();

    let row_data = |i: usize| -> (&Vec<f64>, f64) {
        if i < m {
            (&p.ineq_lhs[i], p.ineq_rhs[i])
        } else {
            (&p.eq_lhs[i - m], p.eq_rhs[i - m])
        }
    };

    let mut t = vec![T::zero(); rows * cols];
    let mut basis = vec![0usize; rows];
    let mut sigma = vec![1i8; rows];
    let mut b0 = Vec::with_capacity(rows);
    let mut phase1_cost = vec![T::zero(); cols];
    let mut rhs_scale = 0.0f64;
    for i in 0..rows {
        let (coeffs, rhs) = row_data(i);
        rhs_scale = rhs_scale.max(rhs.abs());
        let mut residual = T::from_f64(rhs);
        let mut entries: Vec<T> = Vec::with_capacity(n);
        for (j, &a) in coeffs.iter().enumerate() {
            let a = T::from_f64(a);
            if !a.is_zero_exact() && !value[j].is_zero_exact() {
                residual = residual - a.clone() * value[j].clone();
            }
            entries.push(a);
        }
        let slack_basic = i < m && residual >= T::zero();
        let s: i8 = if residual >= T::zero() { 1 } else { -1 };
        sigma[i] = if slack_basic { 1 } else { s };
        let signed = |x: T| if sigma[i] > 0 { x } else { -x };
        for (j, a) in entries.into_iter().enumerate() {
            t[i * cols + j] = signed(a);
        }
        if i < m {
            t[i * cols + n + i] = signed(T::one());
        }
        t[i * cols + art0 + i] = T::one();
        let rhs = T::from_f64(rhs);
        b0.push(if sigma[i] > 0 { rhs } else { -rhs });
        let v = if sigma[i] > 0 { residual } else { -residual };
        if slack_basic {
            basis[i] = n + i;
            value[n + i] = v;
        } else {
            basis[i] = art0 + i;
            value[art0 + i] = v;
            upper[art0 + i] = None;
            phase1_cost[art0 + i] = T::one();
        }
    }

    let mut is_basic = vec![false; cols];
    for &b in &basis {
        is_basic[b] = true;
    }

    let a0 = t.clone();
    let mut tab = Tableau {
        rows,
        cols,
        t,
        value,
        lower,
        upper,
        basis,
        is_basic,
        d: Vec::new(),
        cost: Vec::new(),
        a0,
        b0,
        exact: options.exact,
        since_reinversion: 0,
        eps,
        pivot_eps,
        first_artificial: art0,
        rule: options.pivot,
        degenerate_run: 0,
        iterations: 0,
        max_iterations: 200_000 + 50 * (rows + cols),
    };

    // Phase 1: drive the artificial variables to zero.
    if phase1_cost.iter().any(|c| !c.is_zero_exact()) {
        tab.set_cost(phase1_cost);
        if let Step::Unbounded { .. } = tab.iterate()? {
            return Err(Error::NumericalFailure("phase one reported unbounded".into()));
        }
        let infeasibility = (art0..cols).fold(T::zero(), |acc, j| acc + tab.value[j].clone());
        let threshold = if options.exact {
            T::zero()
        } else {
            T::from_f64(100.0 * options.tol * (1.0 + rhs_scale))
        };
        if infeasibility > threshold {
            return Ok(Raw::Infeasible);
        }
        for j in art0..cols {
            tab.upper[j] = Some(T::zero());
            tab.value[j] = T::zero();
        }
    }

    // Phase 2.
    let mut cost: Vec<T> = p.objective.iter().map(|&c| T::from_f64(c)).collect();
    cost.resize(cols, T::zero());
    tab.set_cost(cost);
    tab.degenerate_run = 0;
    match tab.iterate()? {
        Step::Unbounded { entering, dir } => {
            let mut ray = vec![0.0; n];
            let sign = if dir > 0 { 1.0 } else { -1.0 };
            if entering < n {
                ray[entering] = sign;
            }
            for i in 0..rows {
                let b = tab.basis[i];
                if b < n {
                    ray[b] = -sign * tab.at(i, entering).to_f64();
                }
            }
            Ok(Raw::Unbounded { ray })
        }
        Step::Optimal => {
            let x = tab.value[..n].iter().map(Scalar::to_f64).collect();
            let dual = (0..rows)
                .map(|i| {
                    let d = tab.d[art0 + i].to_f64();
                    if sigma[i] > 0 {
                        -d
                    } else {
                        d
                    }
                })
                .collect();
            let alternative_optima = (0..art0).any(|j| {
                !tab.is_basic[j]
                    && tab.d[j].abs() <= tab.eps
                    && (tab.can_increase(j) || tab.can_decrease(j))
            });
            Ok(Raw::Optimal {
                x,
                dual,
                alternative_optima,
            })
        }
    }
}
