//! Bounded-variable dual simplex on a dense tableau.
//!
//! Rows `a_i x + s_i = b_i` with slacks `s_i >= 0`. The starting basis is
//! either the slack basis (every structural parked at the bound its cost
//! prefers) or a stored basis refactored by Gauss-Jordan elimination. Both
//! are dual feasible, so only the dual simplex is needed.

use super::instance::MilpInstance;
use crate::error::{Error, Result};

pub const FEAS_TOL: f64 = 1e-7;
pub const INT_TOL: f64 = 1e-6;
pub const PIVOT_TOL: f64 = 1e-10;
/// Stand-in for infinite bounds when a nonbasic variable must sit there.
const BIG_BOUND: f64 = 1e7;
const DUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Basic variables by row plus the bound each nonbasic variable sits at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub basic: Vec<usize>,
    pub at_upper: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    /// Structural values (meaningful when optimal).
    pub x: Vec<f64>,
    pub objective: f64,
    pub basis: Option<Basis>,
    pub iterations: usize,
}

struct Tableau<'a> {
    inst: &'a MilpInstance,
    m: usize,
    w: usize,
    t: Vec<f64>,
    rhs: Vec<f64>,
    d: Vec<f64>,
    basic: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> Tableau<'a> {
    fn new(inst: &'a MilpInstance, lo: &[f64], hi: &[f64]) -> Self {
        let m = inst.m();
        let n = inst.n;
        let w = n + m;
        let mut l = lo.to_vec();
        let mut h = hi.to_vec();
        l.extend(std::iter::repeat(0.0).take(m));
        h.extend(std::iter::repeat(f64::INFINITY).take(m));
        Self {
            inst,
            m,
            w,
            t: vec![0.0; m * w],
            rhs: vec![0.0; m],
            d: vec![0.0; w],
            basic: Vec::new(),
            is_basic: vec![false; w],
            at_upper: vec![false; w],
            lo: l,
            hi: h,
        }
    }

    fn cost(&self, j: usize) -> f64 {
        if j < self.inst.n {
            self.inst.c[j]
        } else {
            0.0
        }
    }

    fn lo_eff(&self, j: usize) -> f64 {
        self.lo[j].max(-BIG_BOUND)
    }

    fn hi_eff(&self, j: usize) -> f64 {
        self.hi[j].min(BIG_BOUND)
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.hi_eff(j)
        } else {
            self.lo_eff(j)
        }
    }

    fn load_matrix(&mut self) {
        let n = self.inst.n;
        self.t.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in self.inst.rows.iter().enumerate() {
            for &(j, v) in &row.coeffs {
                self.t[i * self.w + j] += v;
            }
            self.t[i * self.w + n + i] = 1.0;
            self.rhs[i] = row.rhs;
        }
    }

    fn slack_start(&mut self) {
        self.load_matrix();
        let n = self.inst.n;
        self.basic = (n..n + self.m).collect();
        self.is_basic = (0..self.w).map(|j| j >= n).collect();
        self.d = (0..self.w).map(|j| self.cost(j)).collect();
        for j in 0..self.w {
            self.at_upper[j] = false;
        }
        self.fix_dual_statuses();
    }

    /// Rebuilds `B^-1 [A | I]` for `basis`; false if it is singular.
    fn refactor(&mut self, basis: &[usize]) -> bool {
        if basis.len() != self.m {
            return false;
        }
        self.load_matrix();
        let w = self.w;
        for r in 0..self.m {
            let col = basis[r];
            let mut piv = r;
            let mut best = 0.0;
            for i in r..self.m {
                let v = self.t[i * w + col].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best < PIVOT_TOL {
                return false;
            }
            if piv != r {
                for k in 0..w {
                    self.t.swap(r * w + k, piv * w + k);
                }
                self.rhs.swap(r, piv);
            }
            self.eliminate(r, col);
        }
        self.basic = basis.to_vec();
        self.is_basic = vec![false; w];
        for &j in &self.basic {
            self.is_basic[j] = true;
        }
        self.d = (0..w).map(|j| self.cost(j)).collect();
        for r in 0..self.m {
            let cb = self.cost(self.basic[r]);
            if cb != 0.0 {
                for j in 0..w {
                    self.d[j] -= cb * self.t[r * w + j];
                }
            }
        }
        for &j in &self.basic {
            self.d[j] = 0.0;
        }
        true
    }

    /// Normalises row `r` on column `col` and clears that column elsewhere
    /// (rows and rhs only).
    fn eliminate(&mut self, r: usize, col: usize) {
        let w = self.w;
        let p = self.t[r * w + col];
        let inv = 1.0 / p;
        for k in 0..w {
            self.t[r * w + k] *= inv;
        }
        self.t[r * w + col] = 1.0;
        self.rhs[r] *= inv;
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for (i, row) in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)).enumerate() {
            let i = if i < r { i } else { i + 1 };
            let f = row[col];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[col] = 0.0;
                self.rhs[i] -= f * self.rhs[r];
            }
        }
    }

    /// Parks every nonbasic variable at the bound its reduced cost prefers.
    fn fix_dual_statuses(&mut self) {
        for j in 0..self.w {
            if self.is_basic[j] {
                continue;
            }
            if self.d[j] < -DUAL_TOL {
                self.at_upper[j] = true;
            } else if self.d[j] > DUAL_TOL {
                self.at_upper[j] = false;
            } else if self.lo[j] == f64::NEG_INFINITY && self.hi[j].is_finite() {
                self.at_upper[j] = true;
            }
        }
    }

    fn basic_values(&self) -> Vec<f64> {
        let w = self.w;
        let mut xb = self.rhs.clone();
        for j in 0..w {
            if self.is_basic[j] {
                continue;
            }
            let v = self.nonbasic_value(j);
            if v != 0.0 {
                for r in 0..self.m {
                    xb[r] -= self.t[r * w + j] * v;
                }
            }
        }
        xb
    }

    fn pivot(&mut self, r: usize, j: usize, leaving_to_upper: bool) {
        let w = self.w;
        let leaving = self.basic[r];
        self.eliminate(r, j);
        let dj = self.d[j];
        if dj != 0.0 {
            for k in 0..w {
                self.d[k] -= dj * self.t[r * w + k];
            }
        }
        self.d[j] = 0.0;
        self.is_basic[leaving] = false;
        self.at_upper[leaving] = leaving_to_upper;
        self.is_basic[j] = true;
        self.at_upper[j] = false;
        self.basic[r] = j;
    }

    fn full_solution(&self) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.w).map(|j| if self.is_basic[j] { 0.0 } else { self.nonbasic_value(j) }).collect();
        for (r, v) in self.basic_values().into_iter().enumerate() {
            x[self.basic[r]] = v;
        }
        x
    }

    fn run(&mut self) -> Result<(LpStatus, usize)> {
        let limit = 50 * (self.w + self.m) + 1000;
        let degenerate_cap = 2 * self.w;
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut refactors = 0;
        let mut iters = 0usize;
        loop {
            if iters > limit {
                return Err(Error::NumericalBreakdown(format!("dual simplex exceeded {limit} iterations")));
            }
            let xb = self.basic_values();
            let mut leave: Option<(usize, bool, f64)> = None;
            for r in 0..self.m {
                let j = self.basic[r];
                let (lo, hi) = (self.lo[j], self.hi[j]);
                let viol = if xb[r] < lo - FEAS_TOL {
                    Some((false, lo - xb[r]))
                } else if xb[r] > hi + FEAS_TOL {
                    Some((true, xb[r] - hi))
                } else {
                    None
                };
                if let Some((to_upper, amount)) = viol {
                    let better = match leave {
                        None => true,
                        Some((lr, _, la)) => {
                            if bland {
                                j < self.basic[lr]
                            } else {
                                amount > la
                            }
                        }
                    };
                    if better {
                        leave = Some((r, to_upper, amount));
                    }
                }
            }
            let Some((r, to_upper, _)) = leave else {
                if self.verify() {
                    return Ok((self.status_at_optimum(), iters));
                }
                refactors += 1;
                if refactors > 2 {
                    return Err(Error::NumericalBreakdown("residual check failed after refactoring".into()));
                }
                let basis = self.basic.clone();
                if !self.refactor(&basis) {
                    return Err(Error::NumericalBreakdown("basis became singular".into()));
                }
                self.fix_dual_statuses();
                continue;
            };
            let w = self.w;
            let mut enter: Option<(usize, f64, f64)> = None;
            for j in 0..w {
                if self.is_basic[j] || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = self.t[r * w + j];
                let eligible = if to_upper {
                    (!self.at_upper[j] && a > PIVOT_TOL) || (self.at_upper[j] && a < -PIVOT_TOL)
                } else {
                    (!self.at_upper[j] && a < -PIVOT_TOL) || (self.at_upper[j] && a > PIVOT_TOL)
                };
                if !eligible {
                    continue;
                }
                let ratio = self.d[j].abs() / a.abs();
                let better = match enter {
                    None => true,
                    Some((_, br, ba)) => {
                        if ratio < br - 1e-12 {
                            true
                        } else if ratio <= br + 1e-12 {
                            !bland && a.abs() > ba
                        } else {
                            false
                        }
                    }
                };
                if better {
                    enter = Some((j, ratio, a.abs()));
                }
            }
            let Some((j, ratio, _)) = enter else {
                return Ok((LpStatus::Infeasible, iters));
            };
            if ratio <= 1e-12 {
                degenerate += 1;
                if degenerate > degenerate_cap {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, j, to_upper);
            iters += 1;
        }
    }

    fn verify(&self) -> bool {
        let x = self.full_solution();
        let n = self.inst.n;
        for i in 0..self.m {
            let act = self.inst.row_activity(i, &x[..n]);
            let rhs = self.inst.rows[i].rhs;
            if act > rhs + FEAS_TOL * (1.0 + rhs.abs()) {
                return false;
            }
        }
        (0..n).all(|j| x[j] >= self.lo[j] - FEAS_TOL * 10.0 && x[j] <= self.hi[j] + FEAS_TOL * 10.0)
    }

    fn status_at_optimum(&self) -> LpStatus {
        let x = self.full_solution();
        let artificial = (0..self.w).any(|j| {
            (self.hi[j] > BIG_BOUND && x[j] >= BIG_BOUND - 1.0) || (self.lo[j] < -BIG_BOUND && x[j] <= -BIG_BOUND + 1.0)
        });
        if artificial {
            LpStatus::Unbounded
        } else {
            LpStatus::Optimal
        }
    }
}

/// Solves the LP relaxation under the given bounds, warm-starting from
/// `warm` when it is a valid basis.
pub fn solve_lp(inst: &MilpInstance, lo: &[f64], hi: &[f64], warm: Option<&Basis>) -> Result<LpResult> {
    let n = inst.n;
    if (0..n).any(|j| lo[j] > hi[j] + FEAS_TOL) {
        return Ok(LpResult { status: LpStatus::Infeasible, x: vec![], objective: f64::INFINITY, basis: None, iterations: 0 });
    }
    let mut tab = Tableau::new(inst, lo, hi);
    let mut warm_ok = false;
    if let Some(b) = warm {
        if b.at_upper.len() == tab.w && tab.refactor(&b.basic) {
            tab.at_upper = b.at_upper.clone();
            for &j in &tab.basic {
                tab.at_upper[j] = false;
            }
            tab.fix_dual_statuses();
            warm_ok = true;
        }
    }
    if !warm_ok {
        tab.slack_start();
    }
    let (status, iterations) = tab.run()?;
    if status != LpStatus::Optimal {
        return Ok(LpResult { status, x: vec![], objective: f64::INFINITY, basis: None, iterations });
    }
    let mut x = tab.full_solution();
    x.truncate(n);
    for j in 0..n {
        x[j] = x[j].clamp(lo[j], hi[j]);
    }
    let objective = inst.objective(&x);
    Ok(LpResult {
        status,
        x,
        objective,
        basis: Some(Basis { basic: tab.basic.clone(), at_upper: tab.at_upper.clone() }),
        iterations,
    })
}
