//! Dense two-phase primal simplex for small linear programs.
//!
//! Variables carry explicit bounds. Finite lower bounds are shifted to
//! zero, free variables are split, and finite upper bounds stay implicit:
//! a nonbasic variable sits at either bound and the ratio test allows a
//! bound flip. Bland's rule picks both the entering and the leaving column,
//! so the pivot sequence is fixed for a given input.

use crate::error::{Error, Result};

pub const FEAS_TOL: f64 = 1e-7;
const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse `(column, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `minimize c·x` subject to the rows and `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// `n` variables in `[0, inf)` with zero cost.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(Constraint { coeffs, sense, rhs });
        self.constraints.len() - 1
    }

    /// Row activity `a·x`.
    pub fn activity(&self, row: usize, x: &[f64]) -> f64 {
        self.constraints[row].coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = (0..self.vars())
            .map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0))
            .fold(0.0, f64::max);
        let rows = (0..self.constraints.len())
            .map(|r| {
                let c = &self.constraints[r];
                let a = self.activity(r, x);
                match c.sense {
                    Sense::Le => (a - c.rhs).max(0.0),
                    Sense::Ge => (c.rhs - a).max(0.0),
                    Sense::Eq => (a - c.rhs).abs(),
                }
            })
            .fold(0.0, f64::max);
        bounds.max(rows)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn check(&self) -> Result<()> {
        let n = self.vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension(format!(
                "{n} objective coefficients but {} lower and {} upper bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (r, c) in self.constraints.iter().enumerate() {
            if let Some(&(j, _)) = c.coeffs.iter().find(|&&(j, _)| j >= n) {
                return Err(Error::Dimension(format!("row {r} references column {j} of {n}")));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                return Err(Error::Dimension(format!("row {r} has a non-finite entry")));
            }
        }
        for j in 0..n {
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY || self.lower[j].is_nan() {
                return Err(Error::Dimension(format!("column {j} has an empty bound range")));
            }
        }
        Ok(())
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
    pub objective: f64,
    pub x: Vec<f64>,
}

/// How an original column maps onto nonnegative internal columns.
#[derive(Debug, Clone, Copy)]
enum ColumnMap {
    /// `x = offset + y`
    Shifted { col: usize, offset: f64 },
    /// `x = offset - y`
    Mirrored { col: usize, offset: f64 },
    /// `x = y+ - y-`
    Split { pos: usize, neg: usize },
}

struct Tableau {
    /// `B^-1 A`, one row per constraint.
    rows: Vec<Vec<f64>>,
    /// Current values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<usize>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    cols: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

impl Tableau {
    fn value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (dj, a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    /// One Bland iteration over columns `< allowed`.
    fn step(&mut self, d: &mut [f64], allowed: usize) -> Step {
        let entering = (0..allowed).find(|&j| {
            !self.is_basic[j] && ((!self.at_upper[j] && d[j] < -COST_TOL) || (self.at_upper[j] && d[j] > COST_TOL))
        });
        let Some(j) = entering else {
            return Step::Optimal;
        };
        let dir = if self.at_upper[j] { -1.0 } else { 1.0 };

        // leaving row, step length, and whether the leaver ends at its upper bound
        let mut best: Option<(usize, f64, bool)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let alpha = row[j] * dir;
            let (limit, to_upper) = if alpha > PIVOT_TOL {
                (self.beta[i].max(0.0) / alpha, false)
            } else if alpha < -PIVOT_TOL && self.upper[self.basis[i]].is_finite() {
                (((self.upper[self.basis[i]] - self.beta[i]).max(0.0)) / -alpha, true)
            } else {
                continue;
            };
            let better = match best {
                None => true,
                Some((bi, bt, _)) => {
                    limit < bt - PIVOT_TOL || (limit <= bt + PIVOT_TOL && self.basis[i] < self.basis[bi])
                }
            };
            if better {
                best = Some((i, limit, to_upper));
            }
        }

        let flip = self.upper[j];
        match best {
            None if !flip.is_finite() => Step::Unbounded,
            Some((_, t, _)) if flip <= t => self.bound_flip(j, dir),
            None => self.bound_flip(j, dir),
            Some((r, t, to_upper)) => {
                let entering_value = self.value(j) + dir * t;
                for (i, row) in self.rows.iter().enumerate() {
                    self.beta[i] -= dir * t * row[j];
                }
                let leaving = self.basis[r];
                self.is_basic[leaving] = false;
                self.at_upper[leaving] = to_upper;
                self.is_basic[j] = true;
                self.at_upper[j] = false;
                self.basis[r] = j;
                self.beta[r] = entering_value;
                self.pivot(r, j, d);
                Step::Moved
            }
        }
    }

    fn bound_flip(&mut self, j: usize, dir: f64) -> Step {
        let t = self.upper[j];
        for (i, row) in self.rows.iter().enumerate() {
            self.beta[i] -= dir * t * row[j];
        }
        self.at_upper[j] = !self.at_upper[j];
        Step::Moved
    }

    fn pivot(&mut self, r: usize, j: usize, d: &mut [f64]) {
        let p = self.rows[r][j];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[j] = 0.0;
            }
        }
        let f = d[j];
        if f != 0.0 {
            for (v, pv) in d.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            d[j] = 0.0;
        }
        self.rows[r] = pivot_row;
    }

    fn run(&mut self, d: &mut [f64], allowed: usize) -> Result<Step> {
        let limit = 50_000 + 200 * (self.rows.len() + self.cols);
        for _ in 0..limit {
            match self.step(d, allowed) {
                Step::Moved => {}
                done => return Ok(done),
            }
        }
        Err(Error::Numerical(format!("no convergence after {limit} pivots")))
    }
}

/// Solves `lp` to optimality or reports infeasibility/unboundedness.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check()?;
    let n = lp.vars();
    let m = lp.constraints.len();

    let mut maps = Vec::with_capacity(n);
    let mut upper = Vec::new();
    let mut cost = Vec::new();
    for j in 0..n {
        let (lo, hi, c) = (lp.lower[j], lp.upper[j], lp.objective[j]);
        let map = if lo.is_finite() {
            upper.push(hi - lo);
            cost.push(c);
            ColumnMap::Shifted {
                col: upper.len() - 1,
                offset: lo,
            }
        } else if hi.is_finite() {
            upper.push(f64::INFINITY);
            cost.push(-c);
            ColumnMap::Mirrored {
                col: upper.len() - 1,
                offset: hi,
            }
        } else {
            upper.extend([f64::INFINITY, f64::INFINITY]);
            cost.extend([c, -c]);
            ColumnMap::Split {
                pos: upper.len() - 2,
                neg: upper.len() - 1,
            }
        };
        maps.push(map);
    }
    if upper.iter().any(|&u| u < -FEAS_TOL) {
        return Ok(infeasible(n));
    }
    upper.iter_mut().for_each(|u| *u = u.max(0.0));
    let structural = upper.len();

    // constraint rows over structural columns, with the rhs adjusted for shifts
    let mut dense = vec![vec![0.0; structural]; m];
    let mut rhs = vec![0.0; m];
    for (r, c) in lp.constraints.iter().enumerate() {
        rhs[r] = c.rhs;
        for &(j, a) in &c.coeffs {
            match maps[j] {
                ColumnMap::Shifted { col, offset } => {
                    dense[r][col] += a;
                    rhs[r] -= a * offset;
                }
                ColumnMap::Mirrored { col, offset } => {
                    dense[r][col] -= a;
                    rhs[r] -= a * offset;
                }
                ColumnMap::Split { pos, neg } => {
                    dense[r][pos] += a;
                    dense[r][neg] -= a;
                }
            }
        }
    }

    let slack_rows: Vec<usize> = (0..m).filter(|&r| lp.constraints[r].sense != Sense::Eq).collect();
    let slack_start = structural;
    let art_start = slack_start + slack_rows.len();
    let cols = art_start + m;
    let mut rows = vec![vec![0.0; cols]; m];
    for (r, row) in rows.iter_mut().enumerate() {
        row[..structural].copy_from_slice(&dense[r]);
    }
    for (s, &r) in slack_rows.iter().enumerate() {
        rows[r][slack_start + s] = if lp.constraints[r].sense == Sense::Le { 1.0 } else { -1.0 };
    }
    for (r, row) in rows.iter_mut().enumerate() {
        if rhs[r] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
            rhs[r] = -rhs[r];
        }
        row[art_start + r] = 1.0;
    }
    upper.extend(std::iter::repeat_n(f64::INFINITY, cols - structural));
    cost.extend(std::iter::repeat_n(0.0, cols - structural));

    let mut is_basic = vec![false; cols];
    (art_start..cols).for_each(|j| is_basic[j] = true);
    let mut tab = Tableau {
        rows,
        beta: rhs,
        basis: (art_start..cols).collect(),
        upper,
        at_upper: vec![false; cols],
        is_basic,
        cols,
    };

    let phase1: Vec<f64> = (0..cols).map(|j| if j >= art_start { 1.0 } else { 0.0 }).collect();
    let mut d = tab.reduced_costs(&phase1);
    tab.run(&mut d, cols)?;
    let infeas: f64 = tab
        .basis
        .iter()
        .zip(&tab.beta)
        .filter(|(&b, _)| b >= art_start)
        .map(|(_, v)| v)
        .sum();
    let scale = 1.0 + tab.beta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if infeas > FEAS_TOL * scale {
        return Ok(infeasible(n));
    }

    // artificials stay at zero from here on
    (art_start..cols).for_each(|j| tab.upper[j] = 0.0);
    let mut d = tab.reduced_costs(&cost);
    if let Step::Unbounded = tab.run(&mut d, art_start)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: f64::NEG_INFINITY,
            x: vec![f64::NAN; n],
        });
    }

    let mut y: Vec<f64> = (0..cols).map(|j| tab.value(j)).collect();
    for (&b, &v) in tab.basis.iter().zip(&tab.beta) {
        y[b] = v;
    }
    let x: Vec<f64> = maps
        .iter()
        .enumerate()
        .map(|(j, map)| {
            let v = match *map {
                ColumnMap::Shifted { col, offset } => offset + y[col],
                ColumnMap::Mirrored { col, offset } => offset - y[col],
                ColumnMap::Split { pos, neg } => y[pos] - y[neg],
            };
            v.clamp(lp.lower[j], lp.upper[j])
        })
        .collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_value(&x),
        x,
    })
}

fn infeasible(n: usize) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        objective: f64::INFINITY,
        x: vec![f64::NAN; n],
    }
}
