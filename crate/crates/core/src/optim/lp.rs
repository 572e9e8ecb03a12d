//! Dense tableau simplex for small linear programs.
//!
//! Two-phase bounded-variable method: every variable is nonnegative and may
//! carry a finite upper bound, which is handled by bound flipping instead of an
//! extra constraint row. Pricing is Dantzig's largest-reduced-cost rule; after
//! a run of degenerate pivots the solver switches to Bland's smallest-index rule
//! for both the entering and leaving choice, which rules out cycling.

use crate::error::{Error, Result};

use super::{Certificate, OptimizerReport};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// `optimize objective·x` subject to `rows[i]·x (relation) rhs[i]`, `0 ≤ x ≤ upper`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub rows: Vec<Vec<f64>>,
    pub relations: Vec<Relation>,
    pub rhs: Vec<f64>,
    /// Per-variable upper bound; `f64::INFINITY` for none.
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, sense: Sense) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            sense,
            rows: Vec::new(),
            relations: Vec::new(),
            rhs: Vec::new(),
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::new(objective, Sense::Maximize)
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::new(objective, Sense::Minimize)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constraint(&mut self, row: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.rows.push(row);
        self.relations.push(relation);
        self.rhs.push(rhs);
        self
    }

    pub fn le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.constraint(row, Relation::Le, rhs)
    }

    pub fn ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.constraint(row, Relation::Ge, rhs)
    }

    pub fn eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.constraint(row, Relation::Eq, rhs)
    }

    pub fn upper_bound(&mut self, var: usize, bound: f64) -> &mut Self {
        self.upper[var] = bound;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return Err(Error::invalid("linear program", "no variables"));
        }
        if self.upper.len() != n {
            return Err(Error::dims(n, self.upper.len()));
        }
        if self.relations.len() != self.rows.len() || self.rhs.len() != self.rows.len() {
            return Err(Error::dims(self.rows.len(), self.rhs.len()));
        }
        for row in &self.rows {
            if row.len() != n {
                return Err(Error::dims(n, row.len()));
            }
        }
        let finite = self
            .objective
            .iter()
            .chain(self.rows.iter().flatten())
            .chain(&self.rhs)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid(
                "linear program",
                "coefficients must be finite (cap infinities before solving)",
            ));
        }
        if self.upper.iter().any(|&u| u.is_nan() || u < 0.0) {
            return Err(Error::invalid("linear program", "upper bounds must be nonnegative"));
        }
        Ok(())
    }

    /// `rows[i]·x` for each constraint.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// Row-major `m × ncols`.
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    upper: Vec<f64>,
    /// Reduced costs for the current phase objective.
    d: Vec<f64>,
    iterations: usize,
    bland: bool,
    degenerate_run: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
                for (dj, tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        self.d = d;
    }

    fn choose_entering(&self, allowed: &dyn Fn(usize) -> bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.ncols {
            if !allowed(j) {
                continue;
            }
            let dir = match self.status[j] {
                Status::Basic => continue,
                Status::Lower if self.d[j] < -COST_TOL && self.upper[j] > 0.0 => 1.0,
                Status::Upper if self.d[j] > COST_TOL => -1.0,
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.map_or(true, |(b, _)| self.d[j].abs() > self.d[b].abs()) {
                best = Some((j, dir));
            }
        }
        best
    }

    fn step(&mut self, allowed: &dyn Fn(usize) -> bool) -> Step {
        let Some((q, dir)) = self.choose_entering(allowed) else {
            return Step::Optimal;
        };
        // Ratio test over basic variables plus the entering variable's own bound.
        let mut limit = self.upper[q];
        let mut leave: Option<usize> = None;
        for i in 0..self.m {
            let a = dir * self.at(i, q);
            let bound = if a > PIVOT_TOL {
                self.beta[i].max(0.0) / a
            } else if a < -PIVOT_TOL && self.upper[self.basis[i]].is_finite() {
                (self.upper[self.basis[i]] - self.beta[i]).max(0.0) / -a
            } else {
                continue;
            };
            let better = match leave {
                _ if bound < limit - 1e-14 => true,
                Some(r) if bound <= limit + 1e-14 => self.basis[i] < self.basis[r],
                None if bound <= limit + 1e-14 && limit < self.upper[q] => true,
                _ => false,
            };
            if better {
                limit = bound;
                leave = Some(i);
            }
        }
        if limit.is_infinite() {
            return Step::Unbounded;
        }
        self.iterations += 1;
        if limit <= 1e-14 {
            self.degenerate_run += 1;
            if self.degenerate_run > DEGENERATE_STREAK {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
        }
        for i in 0..self.m {
            let a = dir * self.at(i, q);
            self.beta[i] -= a * limit;
        }
        match leave {
            None => {
                // bound flip
                self.status[q] = if dir > 0.0 { Status::Upper } else { Status::Lower };
            }
            Some(r) => {
                let a = dir * self.at(r, q);
                let leaving = self.basis[r];
                self.status[leaving] = if a > 0.0 { Status::Lower } else { Status::Upper };
                let entering_value = if dir > 0.0 { limit } else { self.upper[q] - limit };
                self.pivot(r, q);
                self.beta[r] = entering_value;
                self.basis[r] = q;
                self.status[q] = Status::Basic;
            }
        }
        Step::Moved
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.ncols;
        let p = self.at(r, q);
        for j in 0..n {
            self.t[r * n + j] /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * n..(r + 1) * n].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * n + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * n..(i + 1) * n];
            for (x, pr) in row.iter_mut().zip(&pivot_row) {
                *x -= f * pr;
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for (dj, pr) in self.d.iter_mut().zip(&pivot_row) {
                *dj -= f * pr;
            }
            self.d[q] = 0.0;
        }
    }

    fn run(&mut self, allowed: &dyn Fn(usize) -> bool, max_iter: usize) -> Result<bool> {
        self.bland = false;
        self.degenerate_run = 0;
        loop {
            if self.iterations >= max_iter {
                return Ok(false);
            }
            match self.step(allowed) {
                Step::Optimal => return Ok(true),
                Step::Unbounded => return Err(Error::Unbounded),
                Step::Moved => {}
            }
        }
    }

    fn value_of(&self, j: usize) -> f64 {
        match self.status[j] {
            Status::Lower => 0.0,
            Status::Upper => self.upper[j],
            Status::Basic => {
                let r = self.basis.iter().position(|&b| b == j).unwrap();
                self.beta[r]
            }
        }
    }
}

/// Power of two closest to `1 / largest`, or 1 for an all-zero line.
fn pow2_scale(largest: f64) -> f64 {
    if largest > 0.0 {
        2f64.powi(-largest.log2().round() as i32)
    } else {
        1.0
    }
}

/// Solves a linear program to optimality.
///
/// Returns the optimal value in the caller's sense, the optimal vertex, the
/// final basis and the row duals (sensitivity of the optimum to each `rhs`).
///
/// Rows and then columns are scaled by powers of two so that each has largest
/// magnitude near one; pivot tolerances are absolute, and probabilities of
/// long outcome strings would otherwise fall below them.
pub fn solve_lp(lp: &LinearProgram) -> Result<OptimizerReport> {
    lp.validate()?;
    let n = lp.num_vars();
    let row_scale: Vec<f64> = lp
        .rows
        .iter()
        .map(|r| pow2_scale(r.iter().fold(0.0f64, |a, v| a.max(v.abs()))))
        .collect();
    let col_scale: Vec<f64> = (0..n)
        .map(|j| pow2_scale(lp.rows.iter().zip(&row_scale).fold(0.0f64, |a, (r, s)| a.max((r[j] * s).abs()))))
        .collect();
    let scaled = LinearProgram {
        objective: lp.objective.iter().zip(&col_scale).map(|(c, s)| c * s).collect(),
        sense: lp.sense,
        rows: lp
            .rows
            .iter()
            .zip(&row_scale)
            .map(|(r, rs)| r.iter().zip(&col_scale).map(|(a, cs)| a * rs * cs).collect())
            .collect(),
        relations: lp.relations.clone(),
        rhs: lp.rhs.iter().zip(&row_scale).map(|(b, s)| b * s).collect(),
        upper: lp.upper.iter().zip(&col_scale).map(|(u, s)| u / s).collect(),
    };
    let mut report = solve_scaled(&scaled)?;
    for (x, s) in report.argument.iter_mut().zip(&col_scale) {
        *x = (*x * s).clamp(0.0, f64::INFINITY);
    }
    for (x, u) in report.argument.iter_mut().zip(&lp.upper) {
        *x = x.min(*u);
    }
    report.value = lp.objective.iter().zip(&report.argument).map(|(c, v)| c * v).sum();
    if let Certificate::LpBasis { duals, .. } = &mut report.certificate {
        for (y, s) in duals.iter_mut().zip(&row_scale) {
            *y *= s;
        }
    }
    Ok(report)
}

fn solve_scaled(lp: &LinearProgram) -> Result<OptimizerReport> {
    let n = lp.num_vars();
    let m = lp.rows.len();

    // Columns: structural | one slack/surplus per inequality row | one artificial per row needing it.
    let mut flip = vec![1.0; m];
    let mut rel = lp.relations.clone();
    for i in 0..m {
        if lp.rhs[i] < 0.0 {
            flip[i] = -1.0;
            rel[i] = match rel[i] {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }
    let slack_count = rel.iter().filter(|r| **r != Relation::Eq).count();
    let art_count = rel.iter().filter(|r| **r != Relation::Le).count();
    let ncols = n + slack_count + art_count;
    let mut t = vec![0.0; m * ncols];
    let mut upper = lp.upper.clone();
    upper.resize(ncols, f64::INFINITY);
    let mut basis = vec![0; m];
    let mut status = vec![Status::Lower; ncols];
    let mut slack_col = vec![usize::MAX; m];
    let mut art_col = vec![usize::MAX; m];
    let mut beta = vec![0.0; m];
    let (mut s, mut a) = (n, n + slack_count);
    for i in 0..m {
        for j in 0..n {
            t[i * ncols + j] = flip[i] * lp.rows[i][j];
        }
        beta[i] = flip[i] * lp.rhs[i];
        match rel[i] {
            Relation::Le => {
                t[i * ncols + s] = 1.0;
                slack_col[i] = s;
                basis[i] = s;
                s += 1;
            }
            Relation::Ge => {
                t[i * ncols + s] = -1.0;
                slack_col[i] = s;
                s += 1;
                t[i * ncols + a] = 1.0;
                art_col[i] = a;
                basis[i] = a;
                a += 1;
            }
            Relation::Eq => {
                t[i * ncols + a] = 1.0;
                art_col[i] = a;
                basis[i] = a;
                a += 1;
            }
        }
    }
    for &b in &basis {
        status[b] = Status::Basic;
    }
    let mut tab = Tableau {
        m,
        ncols,
        t,
        beta,
        basis,
        status,
        upper,
        d: vec![0.0; ncols],
        iterations: 0,
        bland: false,
        degenerate_run: 0,
    };
    let max_iter = 50 * (m + ncols) + 1000;
    let first_art = n + slack_count;

    if art_count > 0 {
        let mut cost = vec![0.0; ncols];
        for c in cost.iter_mut().skip(first_art) {
            *c = 1.0;
        }
        tab.set_costs(&cost);
        tab.run(&|_| true, max_iter)?;
        let infeas: f64 = (first_art..ncols).map(|j| tab.value_of(j)).sum();
        let scale = 1.0 + lp.rhs.iter().fold(0.0f64, |acc, b| acc.max(b.abs()));
        if infeas > FEAS_TOL * scale {
            return Err(Error::Infeasible);
        }
        // Artificials are pinned at zero for phase two.
        for j in first_art..ncols {
            tab.upper[j] = 0.0;
            if tab.status[j] == Status::Upper {
                tab.status[j] = Status::Lower;
            }
        }
        for i in 0..m {
            if tab.basis[i] >= first_art {
                tab.beta[i] = tab.beta[i].max(0.0).min(0.0);
            }
        }
    }

    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; ncols];
    for j in 0..n {
        cost[j] = sign * lp.objective[j];
    }
    tab.set_costs(&cost);
    let converged = tab.run(&|j| j < first_art, max_iter)?;

    let x: Vec<f64> = (0..n).map(|j| tab.value_of(j).clamp(0.0, lp.upper[j])).collect();
    let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();

    // Dual of row i from the reduced cost of its unit column (+e_i for slacks and artificials).
    let duals = (0..m)
        .map(|i| {
            let (col, coef) = if slack_col[i] != usize::MAX && rel[i] == Relation::Le {
                (slack_col[i], 1.0)
            } else {
                (art_col[i], 1.0)
            };
            let y = (cost[col] - tab.d[col]) / coef;
            sign * flip[i] * y
        })
        .collect();

    Ok(OptimizerReport {
        value,
        argument: x,
        iterations: tab.iterations,
        certificate: Certificate::LpBasis {
            basis: tab.basis.clone(),
            duals,
        },
        converged,
    })
}
