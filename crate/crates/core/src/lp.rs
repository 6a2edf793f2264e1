//! Dense two-phase simplex.
//!
//! Solves `min c.x` subject to equality rows, `<=` rows and `x >= 0`.
//! Pivoting follows Bland's rule throughout, which guarantees termination on
//! degenerate problems and makes the returned vertex deterministic.

use crate::error::{invalid, Error, Result};

/// Constraint violation accepted at an optimal point.
pub const FEAS_TOL: f64 = 1e-9;
/// Reduced-cost threshold for optimality.
pub const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpProblem {
    /// Cost row, minimized.
    pub objective: Vec<f64>,
    /// Rows `(a, b)` meaning `a.x = b`.
    pub eq_constraints: Vec<(Vec<f64>, f64)>,
    /// Rows `(a, b)` meaning `a.x <= b`.
    pub ineq_constraints: Vec<(Vec<f64>, f64)>,
}

impl LpProblem {
    pub fn minimize(objective: Vec<f64>) -> Self {
        Self {
            objective,
            ..Self::default()
        }
    }

    pub fn eq(mut self, a: Vec<f64>, b: f64) -> Self {
        self.eq_constraints.push((a, b));
        self
    }

    pub fn le(mut self, a: Vec<f64>, b: f64) -> Self {
        self.ineq_constraints.push((a, b));
        self
    }

    /// `a.x >= b`, stored as `-a.x <= -b`.
    pub fn ge(self, a: Vec<f64>, b: f64) -> Self {
        let neg = a.iter().map(|v| -v).collect();
        self.le(neg, -b)
    }

    pub fn var_count(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.var_count();
        if n == 0 {
            return invalid("linear program needs at least one variable");
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite objective coefficient");
        }
        for (a, b) in self.eq_constraints.iter().chain(&self.ineq_constraints) {
            if a.len() != n {
                return invalid(format!(
                    "constraint row has {} entries, expected {n}",
                    a.len()
                ));
            }
            if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
                return invalid("non-finite constraint coefficient");
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint (including `x >= 0`) at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |a: &[f64]| a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
        let eq = self.eq_constraints.iter().map(|(a, b)| (dot(a) - b).abs());
        let le = self
            .ineq_constraints
            .iter()
            .map(|(a, b)| (dot(a) - b).max(0.0));
        let nonneg = x.iter().map(|v| (-v).max(0.0));
        eq.chain(le).chain(nonneg).fold(0.0, f64::max)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point; zeros unless `status` is optimal.
    pub x: Vec<f64>,
    pub objective_value: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced costs; the last entry is minus the objective value.
    cost: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
    /// Columns at or beyond this index are artificial.
    first_artificial: usize,
    iterations: usize,
    max_iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, row: usize) -> f64 {
        self.rows[row][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn run(&mut self, allow_artificial: bool) -> Result<Outcome> {
        let limit = if allow_artificial {
            self.cols
        } else {
            self.first_artificial
        };
        loop {
            // Bland: lowest-index improving column.
            let Some(enter) = (0..limit).find(|&j| self.cost[j] < -OPT_TOL) else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][enter];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                        if ratio < lr && !tie || tie && self.basis[i] < self.basis[li] {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            self.pivot(r, enter);
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(Error::SolverFailure(format!(
                    "no convergence after {} pivots",
                    self.iterations
                )));
            }
        }
    }
}

pub fn solve(problem: &LpProblem) -> Result<LpSolution> {
    problem.validate()?;
    let n = problem.var_count();
    let n_ineq = problem.ineq_constraints.len();

    // Normalize every row to a nonnegative right-hand side. Rows whose slack
    // is not a valid starting basic variable get an artificial.
    struct Row {
        a: Vec<f64>,
        slack: Option<(usize, f64)>,
        b: f64,
    }
    let mut rows: Vec<Row> = Vec::new();
    for (a, b) in &problem.eq_constraints {
        rows.push(Row {
            a: a.clone(),
            slack: None,
            b: *b,
        });
    }
    for (i, (a, b)) in problem.ineq_constraints.iter().enumerate() {
        rows.push(Row {
            a: a.clone(),
            slack: Some((n + i, 1.0)),
            b: *b,
        });
    }
    for row in rows.iter_mut() {
        if row.b < 0.0 {
            row.a.iter_mut().for_each(|v| *v = -*v);
            row.b = -row.b;
            if let Some((_, s)) = row.slack.as_mut() {
                *s = -*s;
            }
        }
    }
    let first_artificial = n + n_ineq;
    let needs_artificial: Vec<bool> = rows
        .iter()
        .map(|r| !matches!(r.slack, Some((_, s)) if s > 0.0))
        .collect();
    let n_art = needs_artificial.iter().filter(|&&x| x).count();
    let cols = first_artificial + n_art;

    let mut tab = Tableau {
        rows: Vec::with_capacity(rows.len()),
        cost: vec![0.0; cols + 1],
        basis: Vec::with_capacity(rows.len()),
        cols,
        first_artificial,
        iterations: 0,
        max_iterations: 10_000 + 100 * (cols + rows.len()),
    };
    let mut next_art = first_artificial;
    for (row, &art) in rows.iter().zip(&needs_artificial) {
        let mut t = vec![0.0; cols + 1];
        t[..n].copy_from_slice(&row.a);
        if let Some((j, s)) = row.slack {
            t[j] = s;
        }
        t[cols] = row.b;
        if art {
            t[next_art] = 1.0;
            tab.basis.push(next_art);
            next_art += 1;
        } else {
            tab.basis.push(row.slack.expect("slack basic").0);
        }
        tab.rows.push(t);
    }

    // Phase 1: minimize the sum of artificials.
    for (i, &art) in needs_artificial.iter().enumerate() {
        if art {
            for j in 0..first_artificial {
                tab.cost[j] -= tab.rows[i][j];
            }
            tab.cost[cols] -= tab.rows[i][cols];
        }
    }
    if n_art > 0 {
        tab.run(true)?;
        let infeasibility = -tab.cost[cols];
        let scale = 1.0 + rows.iter().map(|r| r.b.abs()).fold(0.0, f64::max);
        if infeasibility > FEAS_TOL * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective_value: 0.0,
            });
        }
        // Drive artificials out of the basis; rows where that is impossible
        // are redundant.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= first_artificial {
                let col = (0..first_artificial)
                    .filter(|&j| tab.rows[i][j].abs() > PIVOT_TOL)
                    .max_by(|&a, &b| tab.rows[i][a].abs().total_cmp(&tab.rows[i][b].abs()));
                match col {
                    Some(j) => {
                        tab.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    // Phase 2 on the original costs.
    tab.cost = vec![0.0; cols + 1];
    tab.cost[..n].copy_from_slice(&problem.objective);
    for i in 0..tab.rows.len() {
        let b = tab.basis[i];
        let f = tab.cost[b];
        if f != 0.0 {
            let row = tab.rows[i].clone();
            for (v, r) in tab.cost.iter_mut().zip(&row) {
                *v -= f * r;
            }
        }
    }
    if let Outcome::Unbounded = tab.run(false)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![0.0; n],
            objective_value: f64::NEG_INFINITY,
        });
    }

    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs(i).max(0.0);
        }
    }
    let violation = problem.max_violation(&x);
    let scale = 1.0
        + problem
            .eq_constraints
            .iter()
            .chain(&problem.ineq_constraints)
            .map(|(_, b)| b.abs())
            .fold(0.0, f64::max);
    if violation > 1e-6 * scale {
        return Err(Error::SolverFailure(format!(
            "numerically degenerate basis: final point violates constraints by {violation:e}"
        )));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: problem.objective_at(&x),
        x,
    })
}
