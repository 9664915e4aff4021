//! A small revised-simplex linear-programming solver.
//!
//! Problems are built row by row with [`LinearProgram`] and converted to
//! standard form `min c.x, A x = b, x >= 0, b >= 0`. Phase 1 minimizes the sum
//! of one artificial variable per row; when that optimum is positive the
//! phase-1 duals form a Farkas ray, which is returned so callers can turn it
//! into a certificate. The basis inverse is kept dense and updated by
//! elementary row operations, with periodic refactorization. Columns are
//! sparse, so transport-shaped problems with many variables stay cheap.
//!
//! Callers are expected to re-verify solutions and certificates themselves.

use crate::error::{Error, Result};

const PRICE_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarKind {
    NonNeg,
    Free,
    /// `0 <= x <= ub`.
    Bounded(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Row {
    coefs: Vec<(usize, f64)>,
    cmp: Cmp,
    rhs: f64,
}

/// A linear program over named variable indices.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    kinds: Vec<VarKind>,
    cost: Vec<f64>,
    rows: Vec<Row>,
}

/// Result of a solve.
#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    /// Ray `y` over the constraint rows (in insertion order, bound rows
    /// excluded) with `y.b > 0` and `y.A_j <= 0` for every nonnegative
    /// variable, `= 0` for free variables, `y_r <= 0` on `<=` rows and
    /// `y_r >= 0` on `>=` rows.
    Infeasible { farkas: Vec<f64> },
    Unbounded,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, kind: VarKind, cost: f64) -> usize {
        self.kinds.push(kind);
        self.cost.push(cost);
        self.kinds.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.kinds.len()
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        debug_assert!(coefs.iter().all(|(j, _)| *j < self.kinds.len()));
        self.rows.push(Row { coefs, cmp, rhs });
    }

    /// Minimize the objective.
    pub fn minimize(&self) -> Result<LpOutcome> {
        self.solve(1.0)
    }

    /// Maximize the objective; the reported objective is the maximum.
    pub fn maximize(&self) -> Result<LpOutcome> {
        self.solve(-1.0)
    }

    fn solve(&self, sense: f64) -> Result<LpOutcome> {
        let std = StandardForm::build(self, sense);
        let mut s = Simplex::new(&std);
        let phase1 = s.phase1()?;
        let scale = 1.0 + std.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if phase1 > 1e-9 * scale {
            let y = s.duals(&s.phase1_cost());
            let farkas = (0..self.rows.len()).map(|r| std.row_sign[r] * y[r]).collect();
            return Ok(LpOutcome::Infeasible { farkas });
        }
        s.drive_out_artificials();
        if !s.phase2()? {
            return Ok(LpOutcome::Unbounded);
        }
        let xs = s.primal();
        let mut x = vec![0.0; self.kinds.len()];
        for (j, cols) in std.var_cols.iter().enumerate() {
            x[j] = match cols {
                VarCols::Single(c) => xs[*c],
                VarCols::Split(p, m) => xs[*p] - xs[*m],
            };
        }
        let objective = x.iter().zip(&self.cost).map(|(a, c)| a * c).sum::<f64>();
        Ok(LpOutcome::Optimal { x, objective })
    }
}

#[derive(Debug, Clone, Copy)]
enum VarCols {
    Single(usize),
    Split(usize, usize),
}

struct StandardForm {
    /// Sparse columns, artificials excluded.
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    b: Vec<f64>,
    row_sign: Vec<f64>,
    var_cols: Vec<VarCols>,
}

impl StandardForm {
    fn build(lp: &LinearProgram, sense: f64) -> Self {
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut cost = Vec::new();
        let mut var_cols = Vec::with_capacity(lp.kinds.len());
        let mut b: Vec<f64> = lp.rows.iter().map(|r| r.rhs).collect();
        let mut bound_rows = Vec::new();
        for (j, kind) in lp.kinds.iter().enumerate() {
            let c = sense * lp.cost[j];
            match kind {
                VarKind::NonNeg => {
                    var_cols.push(VarCols::Single(cols.len()));
                    cols.push(Vec::new());
                    cost.push(c);
                }
                VarKind::Free => {
                    var_cols.push(VarCols::Split(cols.len(), cols.len() + 1));
                    cols.push(Vec::new());
                    cols.push(Vec::new());
                    cost.push(c);
                    cost.push(-c);
                }
                VarKind::Bounded(ub) => {
                    var_cols.push(VarCols::Single(cols.len()));
                    bound_rows.push((cols.len(), *ub));
                    cols.push(Vec::new());
                    cost.push(c);
                }
            }
        }
        for (r, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coefs {
                if a == 0.0 {
                    continue;
                }
                match var_cols[j] {
                    VarCols::Single(c) => cols[c].push((r, a)),
                    VarCols::Split(p, m) => {
                        cols[p].push((r, a));
                        cols[m].push((r, -a));
                    }
                }
            }
            match row.cmp {
                Cmp::Le => {
                    cols.push(vec![(r, 1.0)]);
                    cost.push(0.0);
                }
                Cmp::Ge => {
                    cols.push(vec![(r, -1.0)]);
                    cost.push(0.0);
                }
                Cmp::Eq => {}
            }
        }
        for (col, ub) in bound_rows {
            let r = b.len();
            b.push(ub);
            cols[col].push((r, 1.0));
            cols.push(vec![(r, 1.0)]);
            cost.push(0.0);
        }
        // merge duplicate row entries within a column
        for col in cols.iter_mut() {
            col.sort_by_key(|e| e.0);
            col.dedup_by(|a, b| {
                if a.0 == b.0 {
                    b.1 += a.1;
                    true
                } else {
                    false
                }
            });
        }
        let mut row_sign = vec![1.0; b.len()];
        for r in 0..b.len() {
            if b[r] < 0.0 {
                row_sign[r] = -1.0;
                b[r] = -b[r];
            }
        }
        for col in cols.iter_mut() {
            for e in col.iter_mut() {
                e.1 *= row_sign[e.0];
            }
        }
        Self { cols, cost, b, row_sign, var_cols }
    }
}

struct Simplex<'a> {
    std: &'a StandardForm,
    m: usize,
    n: usize,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(std: &'a StandardForm) -> Self {
        let m = std.b.len();
        let n = std.cols.len();
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let mut is_basic = vec![false; n + m];
        let basis: Vec<usize> = (n..n + m).collect();
        for &j in &basis {
            is_basic[j] = true;
        }
        Self { std, m, n, basis, is_basic, binv, xb: std.b.clone(), since_refactor: 0 }
    }

    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n {
            self.std.cols[j].clone()
        } else {
            vec![(j - self.n, 1.0)]
        }
    }

    fn phase1_cost(&self) -> Vec<f64> {
        (0..self.n + self.m).map(|j| if j >= self.n { 1.0 } else { 0.0 }).collect()
    }

    fn phase2_cost(&self) -> Vec<f64> {
        (0..self.n + self.m).map(|j| if j < self.n { self.std.cost[j] } else { 0.0 }).collect()
    }

    /// `y = c_B^T B^{-1}`.
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            let c = cost[j];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, bk) in y.iter_mut().zip(row) {
                    *yk += c * bk;
                }
            }
        }
        y
    }

    fn ftran(&self, col: &[(usize, f64)]) -> Vec<f64> {
        let m = self.m;
        (0..m).map(|r| col.iter().map(|&(i, a)| self.binv[r * m + i] * a).sum()).collect()
    }

    fn pivot(&mut self, p: usize, enter: usize, u: &[f64]) {
        let m = self.m;
        let up = u[p];
        for k in 0..m {
            self.binv[p * m + k] /= up;
        }
        self.xb[p] /= up;
        let prow: Vec<f64> = self.binv[p * m..(p + 1) * m].to_vec();
        let xp = self.xb[p];
        for r in 0..m {
            if r != p && u[r] != 0.0 {
                let f = u[r];
                let row = &mut self.binv[r * m..(r + 1) * m];
                for (a, b) in row.iter_mut().zip(&prow) {
                    *a -= f * b;
                }
                self.xb[r] -= f * xp;
                if self.xb[r] < 0.0 && self.xb[r] > -1e-11 {
                    self.xb[r] = 0.0;
                }
            }
        }
        self.is_basic[self.basis[p]] = false;
        self.is_basic[enter] = true;
        self.basis[p] = enter;
        self.since_refactor += 1;
        if self.since_refactor >= 64.max(m / 4) {
            self.refactor();
        }
    }

    /// Recompute `B^{-1}` and `x_B` from scratch by Gauss–Jordan elimination.
    fn refactor(&mut self) {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        for (c, &j) in self.basis.iter().enumerate() {
            for (i, a) in self.column(j) {
                bmat[i * m + c] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m).max_by(|&a, &b| bmat[a * m + col].abs().total_cmp(&bmat[b * m + col].abs())).unwrap();
            if bmat[piv * m + col].abs() < 1e-14 {
                // keep the incrementally updated inverse if the basis looks singular
                self.since_refactor = 0;
                return;
            }
            if piv != col {
                for k in 0..m {
                    bmat.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let d = bmat[col * m + col];
            for k in 0..m {
                bmat[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for r in 0..m {
                if r != col {
                    let f = bmat[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            bmat[r * m + k] -= f * bmat[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        // row r of the inverse corresponds to basis position r
        self.binv = inv;
        self.xb = (0..m).map(|r| (0..m).map(|i| self.binv[r * m + i] * self.std.b[i]).sum::<f64>().max(0.0)).collect();
        self.since_refactor = 0;
    }

    /// Run simplex iterations with the given cost; `allow_artificial` lets
    /// artificial columns re-enter. Returns false when unbounded.
    fn iterate(&mut self, cost: &[f64], allow_artificial: bool) -> Result<bool> {
        let total = if allow_artificial { self.n + self.m } else { self.n };
        let max_iter = 50 * (self.n + self.m) + 1000;
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            let y = self.duals(cost);
            let bland = degenerate_run > 50;
            let mut enter = None;
            let mut best = -PRICE_TOL;
            for j in 0..total {
                if self.is_basic[j] {
                    continue;
                }
                let col = self.column(j);
                let d = cost[j] - col.iter().map(|&(i, a)| y[i] * a).sum::<f64>();
                let scale = 1.0 + col.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
                if d < -PRICE_TOL * scale {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if d / scale < best {
                        best = d / scale;
                        enter = Some(j);
                    }
                }
            }
            let Some(enter) = enter else { return Ok(true) };
            let u = self.ftran(&self.column(enter));
            let mut leave: Option<usize> = None;
            let mut theta = f64::INFINITY;
            for r in 0..self.m {
                if u[r] > PIVOT_TOL {
                    let t = self.xb[r] / u[r];
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            if t < theta - 1e-12 {
                                true
                            } else if t <= theta + 1e-12 {
                                if bland {
                                    self.basis[r] < self.basis[l]
                                } else {
                                    u[r] > u[l]
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        theta = t.min(theta);
                        leave = Some(r);
                    }
                }
            }
            let Some(p) = leave else { return Ok(false) };
            if theta <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(p, enter, &u);
        }
        Err(Error::SolverFailure("simplex iteration limit reached".into()))
    }

    fn phase1(&mut self) -> Result<f64> {
        let cost = self.phase1_cost();
        if !self.iterate(&cost, true)? {
            return Err(Error::SolverFailure("phase 1 reported unbounded".into()));
        }
        self.refactor();
        Ok(self.basis.iter().zip(&self.xb).filter(|(j, _)| **j >= self.n).map(|(_, x)| x).sum())
    }

    /// Pivot zero-level artificials out of the basis where a real column allows it.
    fn drive_out_artificials(&mut self) {
        let m = self.m;
        for p in 0..m {
            if self.basis[p] < self.n {
                continue;
            }
            let row: Vec<f64> = self.binv[p * m..(p + 1) * m].to_vec();
            let found = (0..self.n).filter(|&j| !self.is_basic[j]).find(|&j| {
                self.std.cols[j].iter().map(|&(i, a)| row[i] * a).sum::<f64>().abs() > 1e-7
            });
            if let Some(j) = found {
                let u = self.ftran(&self.std.cols[j]);
                self.pivot(p, j, &u);
            }
        }
    }

    fn phase2(&mut self) -> Result<bool> {
        let cost = self.phase2_cost();
        let ok = self.iterate(&cost, false)?;
        self.refactor();
        Ok(ok)
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                x[j] = self.xb[r];
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(o: LpOutcome) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, objective } => (x, objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut lp = LinearProgram::new();
        let x = lp.add_var(VarKind::NonNeg, 3.0);
        let y = lp.add_var(VarKind::NonNeg, 5.0);
        lp.add_row(vec![(x, 1.0)], Cmp::Le, 4.0);
        lp.add_row(vec![(y, 2.0)], Cmp::Le, 12.0);
        lp.add_row(vec![(x, 3.0), (y, 2.0)], Cmp::Le, 18.0);
        let (sol, obj) = optimal(lp.maximize().unwrap());
        assert!((obj - 36.0).abs() < 1e-9);
        assert!((sol[0] - 2.0).abs() < 1e-9 && (sol[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn free_and_bounded_variables() {
        // min x + y, x free, 0 <= y <= 1, x + y >= -3, x - y = -5
        let mut lp = LinearProgram::new();
        let x = lp.add_var(VarKind::Free, 1.0);
        let y = lp.add_var(VarKind::Bounded(1.0), 1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Cmp::Ge, -3.0);
        lp.add_row(vec![(x, 1.0), (y, -1.0)], Cmp::Eq, -5.0);
        let (sol, obj) = optimal(lp.minimize().unwrap());
        assert!((obj + 3.0).abs() < 1e-9, "{obj}");
        assert!((sol[0] + 4.0).abs() < 1e-9 && (sol[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn farkas_ray_certifies_infeasibility() {
        // x + y = 1, x + y = 2
        let mut lp = LinearProgram::new();
        let x = lp.add_var(VarKind::NonNeg, 0.0);
        let y = lp.add_var(VarKind::NonNeg, 0.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Cmp::Eq, 1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Cmp::Eq, 2.0);
        match lp.minimize().unwrap() {
            LpOutcome::Infeasible { farkas } => {
                let yb = farkas[0] + 2.0 * farkas[1];
                assert!(yb > 0.0);
                assert!(farkas[0] + farkas[1] <= 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(VarKind::NonNeg, 1.0);
        lp.add_row(vec![(x, 1.0)], Cmp::Ge, 1.0);
        assert!(matches!(lp.maximize().unwrap(), LpOutcome::Unbounded));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(VarKind::NonNeg, 1.0);
        let y = lp.add_var(VarKind::NonNeg, 2.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Cmp::Eq, 1.0);
        lp.add_row(vec![(x, 2.0), (y, 2.0)], Cmp::Eq, 2.0);
        let (sol, obj) = optimal(lp.minimize().unwrap());
        assert!((obj - 1.0).abs() < 1e-9 && (sol[0] - 1.0).abs() < 1e-9);
    }
}
