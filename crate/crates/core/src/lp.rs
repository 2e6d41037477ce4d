//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Problems are stated as
//!
//! ```text
//! minimize    c^T x
//! subject to  a_i^T x  (<= | = | >=)  b_i
//!             l_j <= x_j <= u_j        (l_j may be -inf, u_j may be +inf)
//! ```
//!
//! Dual multipliers follow the convention `c - A^T y = d`, so at an optimum
//! `y_i <= 0` on `<=` rows, `y_i >= 0` on `>=` rows, and the reduced cost
//! `d_j` is nonnegative at a lower bound and nonpositive at an upper bound.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::lu_solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("invalid LP: {0}")]
    Invalid(String),
    #[error("simplex iteration limit exceeded after {iterations} pivots (phase {phase})")]
    IterationLimit { iterations: usize, phase: u8 },
    #[error("numerically singular basis")]
    SingularBasis,
    #[error("dual multipliers requested for a {0:?} result")]
    NotOptimal(LpStatus),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    objective: Vec<f64>,
    rows: Vec<Vec<f64>>,
    senses: Vec<RowSense>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LpProblem {
    /// New problem over `objective.len()` variables, all bounded below by 0.
    pub fn new(objective: Vec<f64>) -> Self {
        let m = objective.len();
        Self {
            objective,
            rows: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; m],
            upper: vec![f64::INFINITY; m],
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: RowSense, rhs: f64) -> usize {
        self.rows.push(coeffs);
        self.senses.push(sense);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    pub fn with_row(mut self, coeffs: Vec<f64>, sense: RowSense, rhs: f64) -> Self {
        self.add_row(coeffs, sense, rhs);
        self
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn with_bounds(mut self, j: usize, lower: f64, upper: f64) -> Self {
        self.set_bounds(j, lower, upper);
        self
    }

    pub fn set_free(&mut self, j: usize) {
        self.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn senses(&self) -> &[RowSense] {
        &self.senses
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let m = self.num_vars();
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::Invalid("non-finite objective".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != m {
                return Err(LpError::Invalid(format!(
                    "row {i} has {} coefficients, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) || !self.rhs[i].is_finite() {
                return Err(LpError::Invalid(format!("non-finite data in row {i}")));
            }
        }
        for j in 0..m {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY || l > u {
                return Err(LpError::Invalid(format!("bad bounds [{l}, {u}] on x{j}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-10,
            feas_tol: 1e-9,
            opt_tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Primal solution; empty unless optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint row; empty unless optimal.
    pub duals: Vec<f64>,
    /// `c - A^T y` per variable; empty unless optimal.
    pub reduced_costs: Vec<f64>,
    /// Standard-form column indices of the final basis.
    pub basis: Vec<usize>,
    /// Total pivots over both phases.
    pub iterations: usize,
}

impl LpResult {
    fn terminal(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            basis: Vec::new(),
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// `b^T y` plus the bound terms `d_j l_j` / `d_j u_j` selected by the sign
    /// of each reduced cost. Equals the primal objective at an optimum.
    pub fn dual_objective(&self, problem: &LpProblem) -> f64 {
        let mut value: f64 = self.duals.iter().zip(problem.rhs()).map(|(y, b)| y * b).sum();
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            if d > 0.0 {
                value += d * problem.lower()[j];
            } else if d < 0.0 {
                value += d * problem.upper()[j];
            }
        }
        value
    }
}

/// Dual multipliers of an optimal result.
pub fn dual_multipliers(result: &LpResult) -> Result<&[f64], LpError> {
    if result.is_optimal() {
        Ok(&result.duals)
    } else {
        Err(LpError::NotOptimal(result.status))
    }
}

/// Solves with default tolerances.
pub fn solve_lp(problem: &LpProblem) -> Result<LpResult, LpError> {
    solve_lp_with(problem, &LpOptions::default())
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = l + v`
    Shift { col: usize, lower: f64 },
    /// `x = u - v`
    Mirror { col: usize, upper: f64 },
    /// `x = v+ - v-`
    Split { pos: usize, neg: usize },
}

struct Tableau {
    /// Row-major, `rows x (cols + 1)`; last column is the right-hand side.
    t: Vec<f64>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
    /// Reduced costs, last entry is minus the objective value.
    obj: Vec<f64>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width();
        let piv = self.t[pr * w + pc];
        {
            let row = &mut self.t[pr * w..(pr + 1) * w];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[pc] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == pr {
                continue;
            }
            let factor = self.t[i * w + pc];
            if factor != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                row[pc] = 0.0;
            }
        }
        let factor = self.obj[pc];
        if factor != 0.0 {
            for (v, p) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
            self.obj[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    fn price(&mut self, cost: &[f64]) {
        let w = self.width();
        self.obj = cost.to_vec();
        self.obj.push(0.0);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * w..(i + 1) * w];
                for (o, v) in self.obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
        for &b in &self.basis {
            self.obj[b] = 0.0;
        }
    }

    /// Runs Bland-rule pivots until optimal. Returns `false` on unboundedness.
    fn optimize(
        &mut self,
        eligible: usize,
        opts: &LpOptions,
        iterations: &mut usize,
        phase: u8,
    ) -> Result<bool, LpError> {
        loop {
            let entering = (0..eligible).find(|&j| self.obj[j] < -opts.opt_tol);
            let Some(pc) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, pc);
                if a > opts.pivot_tol {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = leave else {
                return Ok(false);
            };
            if *iterations >= opts.max_iter {
                return Err(LpError::IterationLimit {
                    iterations: *iterations,
                    phase,
                });
            }
            self.pivot(pr, pc);
            *iterations += 1;
        }
    }
}

/// Solves `problem` with the given tolerances.
pub fn solve_lp_with(problem: &LpProblem, opts: &LpOptions) -> Result<LpResult, LpError> {
    problem.validate()?;
    let m = problem.num_vars();
    let r0 = problem.num_rows();

    // Structural columns.
    let mut maps = Vec::with_capacity(m);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..m {
        let (l, u) = (problem.lower[j], problem.upper[j]);
        let map = if l.is_finite() {
            if u.is_finite() {
                bound_rows.push((ncols, u - l));
            }
            VarMap::Shift { col: ncols, lower: l }
        } else if u.is_finite() {
            VarMap::Mirror { col: ncols, upper: u }
        } else {
            ncols += 1;
            VarMap::Split {
                pos: ncols - 1,
                neg: ncols,
            }
        };
        ncols += 1;
        maps.push(map);
    }
    let nstruct = ncols;
    let rows = r0 + bound_rows.len();

    let mut a_struct = vec![0.0; rows * nstruct];
    let mut b = vec![0.0; rows];
    let mut senses = Vec::with_capacity(rows);
    let mut cost = vec![0.0; nstruct];
    for (j, map) in maps.iter().enumerate() {
        let cj = problem.objective[j];
        match *map {
            VarMap::Shift { col, .. } => cost[col] = cj,
            VarMap::Mirror { col, .. } => cost[col] = -cj,
            VarMap::Split { pos, neg } => {
                cost[pos] = cj;
                cost[neg] = -cj;
            }
        }
    }
    for i in 0..r0 {
        let mut bi = problem.rhs[i];
        for (j, map) in maps.iter().enumerate() {
            let a = problem.rows[i][j];
            if a == 0.0 {
                continue;
            }
            match *map {
                VarMap::Shift { col, lower } => {
                    a_struct[i * nstruct + col] = a;
                    bi -= a * lower;
                }
                VarMap::Mirror { col, upper } => {
                    a_struct[i * nstruct + col] = -a;
                    bi -= a * upper;
                }
                VarMap::Split { pos, neg } => {
                    a_struct[i * nstruct + pos] = a;
                    a_struct[i * nstruct + neg] = -a;
                }
            }
        }
        b[i] = bi;
        senses.push(problem.senses[i]);
    }
    for (k, &(col, width)) in bound_rows.iter().enumerate() {
        let i = r0 + k;
        a_struct[i * nstruct + col] = 1.0;
        b[i] = width;
        senses.push(RowSense::Le);
    }

    // Slack columns, then sign flips so that b >= 0, then artificials.
    let slack_rows: Vec<usize> = (0..rows).filter(|&i| senses[i] != RowSense::Eq).collect();
    let nslack = slack_rows.len();
    let cols = nstruct + nslack + rows;
    let art0 = nstruct + nslack;
    let mut std_a = vec![0.0; rows * cols];
    for i in 0..rows {
        std_a[i * cols..i * cols + nstruct].copy_from_slice(&a_struct[i * nstruct..(i + 1) * nstruct]);
    }
    for (k, &i) in slack_rows.iter().enumerate() {
        std_a[i * cols + nstruct + k] = if senses[i] == RowSense::Le { 1.0 } else { -1.0 };
    }
    let mut flip = vec![1.0; rows];
    for i in 0..rows {
        if b[i] < 0.0 {
            flip[i] = -1.0;
            b[i] = -b[i];
            for v in &mut std_a[i * cols..i * cols + art0] {
                *v = -*v;
            }
        }
        std_a[i * cols + art0 + i] = 1.0;
    }
    let mut std_cost = cost.clone();
    std_cost.resize(cols, 0.0);

    let mut t = vec![0.0; rows * (cols + 1)];
    for i in 0..rows {
        t[i * (cols + 1)..i * (cols + 1) + cols].copy_from_slice(&std_a[i * cols..(i + 1) * cols]);
        t[i * (cols + 1) + cols] = b[i];
    }
    let mut tab = Tableau {
        t,
        rows,
        cols,
        basis: (art0..art0 + rows).collect(),
        obj: Vec::new(),
    };
    let mut iterations = 0usize;

    // Phase 1.
    let mut phase1_cost = vec![0.0; cols];
    for c in &mut phase1_cost[art0..] {
        *c = 1.0;
    }
    tab.price(&phase1_cost);
    tab.optimize(art0, opts, &mut iterations, 1)?;
    let infeasibility = -tab.obj[cols];
    let b_scale = b.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    if infeasibility > opts.feas_tol * b_scale {
        return Ok(LpResult::terminal(LpStatus::Infeasible, iterations));
    }
    for i in 0..rows {
        if tab.basis[i] >= art0 {
            let replacement = (0..art0)
                .filter(|j| !tab.basis.contains(j))
                .max_by(|&x, &y| tab.at(i, x).abs().total_cmp(&tab.at(i, y).abs()));
            if let Some(j) = replacement {
                if tab.at(i, j).abs() > opts.pivot_tol {
                    tab.pivot(i, j);
                    iterations += 1;
                }
            }
        }
    }

    // Phase 2.
    tab.price(&std_cost);
    if !tab.optimize(art0, opts, &mut iterations, 2)? {
        return Ok(LpResult::terminal(LpStatus::Unbounded, iterations));
    }

    // Recover primal and dual values from the final basis matrix.
    let basis = tab.basis.clone();
    let bmat = DMatrix::from_fn(rows, rows, |i, k| std_a[i * cols + basis[k]]);
    let cb = DVector::from_iterator(rows, basis.iter().map(|&j| std_cost[j]));
    let bvec = DVector::from_vec(b.clone());
    let (xb, y_std): (Vec<f64>, Vec<f64>) = match (
        lu_solve(&bmat, &bvec, 1e-14),
        lu_solve(&bmat.transpose(), &cb, 1e-14),
    ) {
        (Some(xb), Some(y)) => (xb.iter().copied().collect(), y.iter().copied().collect()),
        _ => {
            // Fall back to the tableau's own values; the artificial columns
            // started as the identity, so their reduced costs are -y.
            let xb: Vec<f64> = (0..rows).map(|i| tab.rhs(i)).collect();
            let y: Vec<f64> = (0..rows).map(|i| -tab.obj[art0 + i]).collect();
            if xb.iter().chain(&y).any(|v| !v.is_finite()) {
                return Err(LpError::SingularBasis);
            }
            (xb, y)
        }
    };
    let mut v = vec![0.0; cols];
    for (k, &j) in basis.iter().enumerate() {
        v[j] = xb[k].max(0.0);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, lower } => lower + v[col],
            VarMap::Mirror { col, upper } => upper - v[col],
            VarMap::Split { pos, neg } => v[pos] - v[neg],
        })
        .collect();
    let duals: Vec<f64> = (0..r0).map(|i| flip[i] * y_std[i]).collect();
    let reduced_costs: Vec<f64> = (0..m)
        .map(|j| {
            problem.objective[j]
                - (0..r0)
                    .map(|i| duals[i] * problem.rows[i][j])
                    .sum::<f64>()
        })
        .collect();
    let objective = x.iter().zip(&problem.objective).map(|(x, c)| x * c).sum();
    Ok(LpResult {
        status: LpStatus::Optimal,
        x,
        objective,
        duals,
        reduced_costs,
        basis,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_pins_variable() {
        let p = LpProblem::new(vec![0.0]).with_row(vec![1.0], RowSense::Eq, 1.0);
        let r = solve_lp(&p).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn segment_optimum_is_a_vertex() {
        let p = LpProblem::new(vec![-1.0, -1.0]).with_row(vec![1.0, 1.0], RowSense::Le, 1.0);
        let r = solve_lp(&p).unwrap();
        assert!((r.objective + 1.0).abs() < 1e-12);
        let at = |a: f64, b: f64| (r.x[0] - a).abs() < 1e-12 && (r.x[1] - b).abs() < 1e-12;
        assert!(at(1.0, 0.0) || at(0.0, 1.0), "{:?}", r.x);
        assert!((r.duals[0] + 1.0).abs() < 1e-12);
        assert!((r.dual_objective(&p) - r.objective).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut p = LpProblem::new(vec![1.0])
            .with_row(vec![1.0], RowSense::Ge, 1.0)
            .with_row(vec![1.0], RowSense::Le, 0.0);
        p.set_free(0);
        let r = solve_lp(&p).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
        assert!(dual_multipliers(&r).is_err());
    }

    #[test]
    fn unbounded_is_reported() {
        let p = LpProblem::new(vec![-1.0]).with_row(vec![-1.0], RowSense::Le, 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn square_equality_duals_solve_transpose_system() {
        // A = [[2,1],[1,3]], free x: y = A^{-T} c.
        let mut p = LpProblem::new(vec![1.0, 2.0])
            .with_row(vec![2.0, 1.0], RowSense::Eq, 3.0)
            .with_row(vec![1.0, 3.0], RowSense::Eq, 5.0);
        p.set_free(0);
        p.set_free(1);
        let r = solve_lp(&p).unwrap();
        // A^T y = c  =>  2y1 + y2 = 1, y1 + 3y2 = 2  =>  y = (0.2, 0.6)
        let y = dual_multipliers(&r).unwrap();
        assert!((y[0] - 0.2).abs() < 1e-12 && (y[1] - 0.6).abs() < 1e-12);
        assert!((r.x[0] - 0.8).abs() < 1e-12 && (r.x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn slack_row_has_zero_multiplier() {
        let p = LpProblem::new(vec![1.0])
            .with_row(vec![1.0], RowSense::Ge, 2.0)
            .with_row(vec![1.0], RowSense::Le, 10.0);
        let r = solve_lp(&p).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-12);
        assert!((r.duals[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.duals[1], 0.0);
    }

    #[test]
    fn epigraph_of_symmetric_deviations_has_half_duals() {
        // min t s.t. t >= u, t >= -u  (i.e. t - u >= 0, t + u >= 0)
        let mut p = LpProblem::new(vec![1.0, 0.0])
            .with_row(vec![1.0, -1.0], RowSense::Ge, 0.0)
            .with_row(vec![1.0, 1.0], RowSense::Ge, 0.0);
        p.set_free(0);
        p.set_free(1);
        let r = solve_lp(&p).unwrap();
        assert!(r.objective.abs() < 1e-12);
        assert!((r.duals[0] - 0.5).abs() < 1e-12);
        assert!((r.duals[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn box_bounds_and_mirrored_variables() {
        // max x + y with x in [-1, 2], y <= 3 (no lower bound), x + y <= 4.
        let mut p = LpProblem::new(vec![-1.0, -1.0]).with_row(vec![1.0, 1.0], RowSense::Le, 4.0);
        p.set_bounds(0, -1.0, 2.0);
        p.set_bounds(1, f64::NEG_INFINITY, 3.0);
        let r = solve_lp(&p).unwrap();
        assert!((r.objective + 4.0).abs() < 1e-12);
        assert!((r.dual_objective(&p) - r.objective).abs() < 1e-12);
    }

    #[test]
    fn invalid_dimensions_are_rejected() {
        let p = LpProblem::new(vec![1.0, 1.0]).with_row(vec![1.0], RowSense::Le, 1.0);
        assert!(matches!(solve_lp(&p), Err(LpError::Invalid(_))));
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let p = LpProblem::new(vec![1.0, 1.0])
            .with_row(vec![1.0, 1.0], RowSense::Eq, 1.0)
            .with_row(vec![2.0, 2.0], RowSense::Eq, 2.0)
            .with_row(vec![0.0, 0.0], RowSense::Eq, 0.0);
        let r = solve_lp(&p).unwrap();
        assert!((r.objective - 1.0).abs() < 1e-12);
        assert!((r.dual_objective(&p) - 1.0).abs() < 1e-12);
    }
}
