//! Dense two-phase primal simplex.
//!
//! Problems here are small (tens of rows, a few hundred columns), so the
//! solver keeps a full tableau and pivots with Bland's rule. Bland's rule
//! gives termination on degenerate problems and makes the chosen optimum a
//! pure function of the input, which the auction relies on for
//! reproducible tie-breaking between equal bids.
//!
//! Duals are reported as `d objective / d rhs` in the caller's own sense,
//! and reduced costs as `c - A^T y`, both read off the final tableau.

use std::fmt;

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    Infeasible,
    Unbounded,
    IterationLimit(usize),
    BadInput(String),
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpError::Infeasible => write!(f, "linear program is infeasible"),
            LpError::Unbounded => write!(f, "linear program is unbounded"),
            LpError::IterationLimit(n) => write!(f, "simplex hit iteration limit ({n})"),
            LpError::BadInput(s) => write!(f, "bad linear program: {s}"),
        }
    }
}

impl std::error::Error for LpError {}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// A linear program over bounded variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    sense: Sense,
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// `d objective / d rhs` per constraint, in the problem's sense.
    pub duals: Vec<f64>,
    /// `c_j - sum_r a_rj * duals_r` per variable.
    pub reduced_costs: Vec<f64>,
    /// Some basic variable sits at zero, so the duals may not be unique.
    pub degenerate: bool,
    pub iterations: usize,
}

impl LinearProgram {
    /// New program with `n` variables, zero objective and bounds `[0, inf)`.
    pub fn new(sense: Sense, n: usize) -> Self {
        LinearProgram {
            sense,
            objective: vec![0.0; n],
            bounds: vec![(0.0, f64::INFINITY); n],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn set_objective(&mut self, j: usize, c: f64) {
        self.objective[j] = c;
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.bounds[j] = (lo, hi);
    }

    /// Adds `sum coeffs <relation> rhs` and returns its row index.
    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        StandardForm::build(self)?.solve(self)
    }
}

/// How a user variable maps onto nonnegative tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = lo + y, with an optional bound row `y <= hi - lo`.
    Shifted { col: usize, lo: f64, bound_row: Option<usize> },
    /// x = hi - y.
    Mirrored { col: usize, hi: f64 },
    /// x = y+ - y-.
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    m: usize,
    /// Structural columns.
    ns: usize,
    /// Total columns: structural, then slack, then artificial.
    n: usize,
    first_artificial: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    /// Phase-2 cost (minimization form).
    cost: Vec<f64>,
    basis: Vec<usize>,
    /// The column that started as the identity column of each row.
    identity_col: Vec<usize>,
    /// +1 or -1: whether the internal row was negated to make rhs >= 0.
    row_sign: Vec<f64>,
    vars: Vec<VarMap>,
    /// Constant term added to the minimization objective by variable shifts.
    obj_offset: f64,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Result<Self, LpError> {
        let sigma = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(LpError::BadInput(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
            if lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::BadInput(format!("variable {j} has an empty domain")));
            }
        }
        for (r, row) in lp.rows.iter().enumerate() {
            if !row.rhs.is_finite() || row.coeffs.iter().any(|&(j, v)| j >= lp.num_vars() || !v.is_finite()) {
                return Err(LpError::BadInput(format!("constraint {r} is malformed")));
            }
        }
        if lp.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::BadInput("objective has a non-finite coefficient".into()));
        }

        // Columns and extra bound rows.
        let mut vars = Vec::with_capacity(lp.num_vars());
        let mut ns = 0usize;
        let mut bound_rows = Vec::new();
        for &(lo, hi) in &lp.bounds {
            let map = if lo.is_finite() {
                let bound_row = if hi.is_finite() {
                    bound_rows.push((ns, hi - lo));
                    Some(lp.rows.len() + bound_rows.len() - 1)
                } else {
                    None
                };
                ns += 1;
                VarMap::Shifted { col: ns - 1, lo, bound_row }
            } else if hi.is_finite() {
                ns += 1;
                VarMap::Mirrored { col: ns - 1, hi }
            } else {
                ns += 2;
                VarMap::Split { pos: ns - 2, neg: ns - 1 }
            };
            vars.push(map);
        }

        // Internal rows over structural columns: (dense coeffs, relation, rhs).
        let m = lp.rows.len() + bound_rows.len();
        let mut dense: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(m);
        for row in &lp.rows {
            let mut coeffs = vec![0.0; ns];
            let mut rhs = row.rhs;
            for &(j, v) in &row.coeffs {
                match vars[j] {
                    VarMap::Shifted { col, lo, .. } => {
                        coeffs[col] += v;
                        rhs -= v * lo;
                    }
                    VarMap::Mirrored { col, hi } => {
                        coeffs[col] -= v;
                        rhs -= v * hi;
                    }
                    VarMap::Split { pos, neg } => {
                        coeffs[pos] += v;
                        coeffs[neg] -= v;
                    }
                }
            }
            dense.push((coeffs, row.relation, rhs));
        }
        for &(col, width) in &bound_rows {
            let mut coeffs = vec![0.0; ns];
            coeffs[col] = 1.0;
            dense.push((coeffs, Relation::Le, width));
        }

        let mut cost_struct = vec![0.0; ns];
        let mut obj_offset = 0.0;
        for (j, map) in vars.iter().enumerate() {
            let c = sigma * lp.objective[j];
            match *map {
                VarMap::Shifted { col, lo, .. } => {
                    cost_struct[col] = c;
                    obj_offset += c * lo;
                }
                VarMap::Mirrored { col, hi } => {
                    cost_struct[col] = -c;
                    obj_offset += c * hi;
                }
                VarMap::Split { pos, neg } => {
                    cost_struct[pos] = c;
                    cost_struct[neg] = -c;
                }
            }
        }

        // Slack per inequality row; artificial wherever no +1 slack exists.
        let n_slack = dense.iter().filter(|r| r.1 != Relation::Eq).count();
        let mut row_sign = vec![1.0; m];
        let mut slack_col = vec![None; m];
        let mut next = ns;
        for (r, row) in dense.iter().enumerate() {
            if row.2 < 0.0 {
                row_sign[r] = -1.0;
            }
            if row.1 != Relation::Eq {
                slack_col[r] = Some(next);
                next += 1;
            }
        }
        debug_assert_eq!(next, ns + n_slack);
        let first_artificial = next;
        let mut identity_col = vec![usize::MAX; m];
        let mut needs_art = Vec::new();
        for (r, row) in dense.iter().enumerate() {
            let slack_coef = match row.1 {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => 0.0,
            } * row_sign[r];
            if slack_coef > 0.0 {
                identity_col[r] = slack_col[r].unwrap();
            } else {
                identity_col[r] = next;
                needs_art.push(r);
                next += 1;
            }
        }
        let n = next;

        let mut a = vec![0.0; m * n];
        let mut b = vec![0.0; m];
        for (r, (coeffs, rel, rhs)) in dense.iter().enumerate() {
            let s = row_sign[r];
            for (c, &v) in coeffs.iter().enumerate() {
                a[r * n + c] = s * v;
            }
            if let Some(sc) = slack_col[r] {
                let coef = if *rel == Relation::Le { 1.0 } else { -1.0 };
                a[r * n + sc] = s * coef;
            }
            b[r] = s * rhs;
        }
        for &r in &needs_art {
            a[r * n + identity_col[r]] = 1.0;
        }

        let mut cost = vec![0.0; n];
        cost[..ns].copy_from_slice(&cost_struct);

        Ok(StandardForm {
            m,
            ns,
            n,
            first_artificial,
            a,
            b,
            cost,
            basis: identity_col.clone(),
            identity_col,
            row_sign,
            vars,
            obj_offset,
        })
    }

    fn pivot(&mut self, r: usize, c: usize, cost_rows: &mut [&mut Vec<f64>]) {
        let n = self.n;
        let p = self.a[r * n + c];
        for v in &mut self.a[r * n..(r + 1) * n] {
            *v /= p;
        }
        self.b[r] /= p;
        let pivot_row: Vec<f64> = self.a[r * n..(r + 1) * n].to_vec();
        let pivot_b = self.b[r];
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * n + c];
            if f != 0.0 {
                for (v, &pr) in self.a[i * n..(i + 1) * n].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.a[i * n + c] = 0.0;
                self.b[i] -= f * pivot_b;
                if self.b[i].abs() < 1e-13 {
                    self.b[i] = 0.0;
                }
            }
        }
        for row in cost_rows.iter_mut() {
            // Last entry holds -objective.
            let f = row[c];
            if f != 0.0 {
                for (v, &pr) in row[..n].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[c] = 0.0;
                row[n] -= f * pivot_b;
            }
        }
        self.basis[r] = c;
    }

    /// Runs Bland-rule iterations on `rows[0]`; the others are carried along.
    fn iterate(
        &mut self,
        rows: &mut [&mut Vec<f64>],
        allow: impl Fn(usize) -> bool,
        iterations: &mut usize,
        limit: usize,
    ) -> Result<(), LpError> {
        loop {
            let entering = (0..self.n).find(|&j| allow(j) && rows[0][j] < -PIVOT_TOL);
            let Some(c) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let arc = self.a[r * self.n + c];
                if arc > PIVOT_TOL {
                    let ratio = self.b[r] / arc;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr]) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(r, c, rows);
            *iterations += 1;
            if *iterations > limit {
                return Err(LpError::IterationLimit(limit));
            }
        }
    }

    fn reduced_row(&self, cost: &[f64]) -> Vec<f64> {
        // d = c - c_B B^-1 A, with -objective in the last slot.
        let n = self.n;
        let mut d = cost.to_vec();
        d.push(0.0);
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for j in 0..n {
                    d[j] -= cb * self.a[r * n + j];
                }
                d[n] -= cb * self.b[r];
            }
        }
        d
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let limit = 200 * (self.m + self.n + 10);
        let mut iterations = 0;
        let first_art = self.first_artificial;

        let mut phase2 = self.reduced_row(&self.cost.clone());
        if first_art < self.n {
            let mut c1 = vec![0.0; self.n];
            for c in &mut c1[first_art..] {
                *c = 1.0;
            }
            let mut phase1 = self.reduced_row(&c1);
            {
                let mut rows = [&mut phase1, &mut phase2];
                self.iterate(&mut rows, |_| true, &mut iterations, limit)?;
            }
            let infeas = -phase1[self.n];
            let scale = 1.0 + self.b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if infeas > 1e-8 * scale {
                return Err(LpError::Infeasible);
            }
            // Drive zero-level artificials out of the basis where possible.
            for r in 0..self.m {
                if self.basis[r] >= first_art {
                    let col = (0..first_art).find(|&j| self.a[r * self.n + j].abs() > 1e-7);
                    if let Some(c) = col {
                        let mut rows = [&mut phase1, &mut phase2];
                        self.pivot(r, c, &mut rows);
                    }
                }
            }
        }
        {
            let mut rows = [&mut phase2];
            self.iterate(&mut rows, |j| j < first_art, &mut iterations, limit)?;
        }

        // Primal values of the columns.
        let mut col_val = vec![0.0; self.n];
        for r in 0..self.m {
            col_val[self.basis[r]] = self.b[r];
        }
        let degenerate = (0..self.m).any(|r| self.b[r].abs() <= FEAS_TOL);

        let sigma = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        // Internal duals y_r = c_e - d_e on each row's original identity column.
        let y_int: Vec<f64> = (0..self.m)
            .map(|r| {
                let e = self.identity_col[r];
                let ce = if e < self.ns { self.cost[e] } else { 0.0 };
                ce - phase2[e]
            })
            .collect();

        let mut x = vec![0.0; lp.num_vars()];
        let mut reduced_costs = vec![0.0; lp.num_vars()];
        for (j, map) in self.vars.iter().enumerate() {
            match *map {
                VarMap::Shifted { col, lo, bound_row } => {
                    x[j] = lo + col_val[col];
                    let corr = bound_row.map(|r| self.row_sign[r] * y_int[r]).unwrap_or(0.0);
                    reduced_costs[j] = sigma * (phase2[col] + corr);
                }
                VarMap::Mirrored { col, hi } => {
                    x[j] = hi - col_val[col];
                    reduced_costs[j] = -sigma * phase2[col];
                }
                VarMap::Split { pos, neg } => {
                    x[j] = col_val[pos] - col_val[neg];
                    reduced_costs[j] = sigma * phase2[pos];
                }
            }
        }
        let duals: Vec<f64> = (0..lp.rows.len()).map(|r| sigma * self.row_sign[r] * y_int[r]).collect();
        let min_obj = -phase2[self.n] + self.obj_offset;
        let objective = sigma * min_obj;
        let _ = FEAS_TOL;

        Ok(LpSolution {
            x,
            objective,
            duals,
            reduced_costs,
            degenerate,
            iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y; x <= 4; 2y <= 12; 3x + 2y <= 18.
        let mut lp = LinearProgram::new(Sense::Maximize, 2);
        lp.set_objective(0, 3.0);
        lp.set_objective(1, 5.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::Le, 4.0);
        lp.add_constraint(vec![(1, 2.0)], Relation::Le, 12.0);
        lp.add_constraint(vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let s = lp.solve().unwrap();
        assert_abs_diff_eq!(s.objective, 36.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[1], 6.0, epsilon = 1e-9);
        // Known shadow prices: (0, 1.5, 1).
        assert_abs_diff_eq!(s.duals[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.duals[1], 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(s.duals[2], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn equality_and_ge_rows_with_shifted_bounds() {
        // min 2a + 3b; a + b = 10; a >= 2 (row); a in [1, 6], b in [0, inf).
        let mut lp = LinearProgram::new(Sense::Minimize, 2);
        lp.set_objective(0, 2.0);
        lp.set_objective(1, 3.0);
        lp.set_bounds(0, 1.0, 6.0);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 10.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::Ge, 2.0);
        let s = lp.solve().unwrap();
        assert_abs_diff_eq!(s.x[0], 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[1], 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.objective, 24.0, epsilon = 1e-9);
        // Extra demand is served by b.
        assert_abs_diff_eq!(s.duals[0], 3.0, epsilon = 1e-9);
        // a sits at its upper bound: reduced cost c - A^T y = 2 - 3 = -1.
        assert_abs_diff_eq!(s.reduced_costs[0], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn free_and_mirrored_variables() {
        // min x - y; x free, y <= 3; x >= -2 via row; x + y <= 5.
        let mut lp = LinearProgram::new(Sense::Minimize, 2);
        lp.set_objective(0, 1.0);
        lp.set_objective(1, -1.0);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.set_bounds(1, f64::NEG_INFINITY, 3.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::Ge, -2.0);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Le, 5.0);
        let s = lp.solve().unwrap();
        assert_abs_diff_eq!(s.x[0], -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[1], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.objective, -5.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(Sense::Minimize, 1);
        lp.add_constraint(vec![(0, 1.0)], Relation::Le, -1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Infeasible);

        let mut lp = LinearProgram::new(Sense::Maximize, 1);
        lp.set_objective(0, 1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn redundant_equality_rows() {
        let mut lp = LinearProgram::new(Sense::Minimize, 2);
        lp.set_objective(0, 1.0);
        lp.set_objective(1, 2.0);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 4.0);
        lp.add_constraint(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 8.0);
        let s = lp.solve().unwrap();
        assert_abs_diff_eq!(s.objective, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_vertex_is_flagged() {
        // Three constraints meet at (1, 1).
        let mut lp = LinearProgram::new(Sense::Maximize, 2);
        lp.set_objective(0, 1.0);
        lp.set_objective(1, 1.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::Le, 1.0);
        lp.add_constraint(vec![(1, 1.0)], Relation::Le, 1.0);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Le, 2.0);
        let s = lp.solve().unwrap();
        assert_abs_diff_eq!(s.objective, 2.0, epsilon = 1e-9);
        assert!(s.degenerate);
    }
}
