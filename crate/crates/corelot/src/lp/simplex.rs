//! Dense two-phase simplex for the small linear programs built in this crate.
//!
//! The solver keeps the full tableau in memory and favors predictability over
//! speed: Dantzig pricing with a lowest-index tie-break, falling back to
//! Bland's rule after a run of degenerate pivots so cycling cannot occur.
//! Problems in this crate stay in the low thousands of columns, where a dense
//! tableau is fast enough and easy to audit.

use thiserror::Error;

/// Relation between a constraint row's left side and its right side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// One constraint row `coeffs · x  {≤,≥,=}  rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear program `min objective · x` subject to `rows`, with `x ≥ 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Constraint>,
}

/// An optimal basic solution.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum SimplexError {
    #[error("linear program is infeasible (phase-1 residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("row {row} has {got} coefficients, expected {expected}")]
    RowShape { row: usize, expected: usize, got: usize },
    #[error("non-finite coefficient in row {0}")]
    NonFinite(usize),
}

const ENTER_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const STALL_LIMIT: usize = 64;

/// Solves the program to optimality.
///
/// Variables are indexed as in `objective`; every variable is implicitly
/// nonnegative. Rows with a negative right side are normalized by negation
/// before slack, surplus, and artificial columns are appended.
pub fn solve(lp: &LinearProgram) -> Result<Solution, SimplexError> {
    let n = lp.objective.len();
    for (i, row) in lp.rows.iter().enumerate() {
        if row.coeffs.len() != n {
            return Err(SimplexError::RowShape { row: i, expected: n, got: row.coeffs.len() });
        }
        if !row.rhs.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(SimplexError::NonFinite(i));
        }
    }

    let mut tableau = Tableau::new(lp, n);
    let max_iter = 1000 + 50 * (tableau.rows + tableau.width);
    let mut iterations = 0usize;

    if tableau.has_artificials() {
        tableau.load_phase1_costs();
        tableau.optimize(tableau.width, max_iter, &mut iterations)?;
        let residual = tableau.obj;
        let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if residual > 1e-7 * scale {
            return Err(SimplexError::Infeasible { residual });
        }
        tableau.drive_out_artificials();
    }

    tableau.load_phase2_costs(&lp.objective);
    tableau.optimize(tableau.art_start, max_iter, &mut iterations)?;

    let x = tableau.extract(n);
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
    Ok(Solution { x, objective, iterations })
}

/// Full-tableau state: `a` is row-major `rows × width`, `basis[i]` is the
/// column basic in row `i`, and `cost`/`obj` hold the current reduced costs
/// and objective value for whichever phase is active.
struct Tableau {
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    obj: f64,
    basis: Vec<usize>,
    banned: Vec<bool>,
    rows: usize,
    width: usize,
    art_start: usize,
}

impl Tableau {
    fn new(lp: &LinearProgram, n: usize) -> Tableau {
        let m = lp.rows.len();
        let mut normalized: Vec<(Vec<f64>, Relation, f64)> =
            lp.rows.iter().map(|r| (r.coeffs.clone(), r.relation, r.rhs)).collect();
        for (coeffs, relation, rhs) in &mut normalized {
            if *rhs < 0.0 {
                for c in coeffs.iter_mut() {
                    *c = -*c;
                }
                *rhs = -*rhs;
                *relation = match *relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }

        let n_extra = normalized.iter().filter(|(_, rel, _)| *rel != Relation::Eq).count();
        let n_art = normalized.iter().filter(|(_, rel, _)| *rel != Relation::Le).count();
        let art_start = n + n_extra;
        let width = art_start + n_art;

        let mut a = vec![0.0; m * width];
        let mut b = vec![0.0; m];
        let mut basis = vec![0usize; m];
        let mut next_extra = n;
        let mut next_art = art_start;
        for (i, (coeffs, relation, rhs)) in normalized.iter().enumerate() {
            a[i * width..i * width + n].copy_from_slice(coeffs);
            b[i] = *rhs;
            match relation {
                Relation::Le => {
                    a[i * width + next_extra] = 1.0;
                    basis[i] = next_extra;
                    next_extra += 1;
                }
                Relation::Ge => {
                    a[i * width + next_extra] = -1.0;
                    next_extra += 1;
                    a[i * width + next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    a[i * width + next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }

        Tableau {
            a,
            b,
            cost: vec![0.0; width],
            obj: 0.0,
            basis,
            banned: vec![false; width],
            rows: m,
            width,
            art_start,
        }
    }

    fn has_artificials(&self) -> bool {
        self.art_start < self.width
    }

    /// Phase-1 objective: minimize the sum of artificial variables, priced
    /// out so the basic artificials have zero reduced cost.
    fn load_phase1_costs(&mut self) {
        for c in self.cost.iter_mut() {
            *c = 0.0;
        }
        for j in self.art_start..self.width {
            self.cost[j] = 1.0;
        }
        self.obj = 0.0;
        for i in 0..self.rows {
            if self.basis[i] >= self.art_start {
                let row = &self.a[i * self.width..(i + 1) * self.width];
                for (c, v) in self.cost.iter_mut().zip(row) {
                    *c -= v;
                }
                self.obj += self.b[i];
            }
        }
    }

    /// Phase-2 objective priced out for the current basis. Artificial
    /// columns stay banned; any still basic sit at value zero.
    fn load_phase2_costs(&mut self, objective: &[f64]) {
        for (j, c) in self.cost.iter_mut().enumerate() {
            *c = if j < objective.len() { objective[j] } else { 0.0 };
        }
        for j in self.art_start..self.width {
            self.banned[j] = true;
        }
        self.obj = 0.0;
        for i in 0..self.rows {
            let cb = if self.basis[i] < objective.len() { objective[self.basis[i]] } else { 0.0 };
            if cb != 0.0 {
                let row = &self.a[i * self.width..(i + 1) * self.width];
                for (c, v) in self.cost.iter_mut().zip(row) {
                    *c -= cb * v;
                }
                self.obj += cb * self.b[i];
            }
        }
    }

    fn optimize(
        &mut self,
        col_limit: usize,
        max_iter: usize,
        iterations: &mut usize,
    ) -> Result<(), SimplexError> {
        let mut stalled = 0usize;
        let mut bland = false;
        loop {
            let entering = if bland {
                self.bland_entering(col_limit)
            } else {
                self.dantzig_entering(col_limit)
            };
            let Some(c) = entering else {
                return Ok(());
            };
            let Some(r) = self.leaving(c) else {
                return Err(SimplexError::Unbounded);
            };
            let before = self.obj;
            self.pivot(r, c);
            *iterations += 1;
            if *iterations > max_iter {
                return Err(SimplexError::IterationLimit(max_iter));
            }
            if (before - self.obj).abs() <= 1e-12 * (1.0 + before.abs()) {
                stalled += 1;
                if stalled >= STALL_LIMIT {
                    bland = true;
                }
            } else {
                stalled = 0;
            }
        }
    }

    fn dantzig_entering(&self, col_limit: usize) -> Option<usize> {
        let mut best = None;
        let mut best_val = -ENTER_TOL;
        for j in 0..col_limit {
            if !self.banned[j] && self.cost[j] < best_val {
                best_val = self.cost[j];
                best = Some(j);
            }
        }
        best
    }

    fn bland_entering(&self, col_limit: usize) -> Option<usize> {
        (0..col_limit).find(|&j| !self.banned[j] && self.cost[j] < -ENTER_TOL)
    }

    fn leaving(&self, c: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let coeff = self.a[i * self.width + c];
            if coeff > PIVOT_TOL {
                let ratio = self.b[i] / coeff;
                let better = match best {
                    None => true,
                    Some((bi, br)) => ratio < br || (ratio == br && self.basis[i] < self.basis[bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let inv = 1.0 / self.a[r * w + c];
        for v in &mut self.a[r * w..(r + 1) * w] {
            *v *= inv;
        }
        self.a[r * w + c] = 1.0;
        self.b[r] *= inv;

        let (pivot_row, pivot_rhs) = {
            let row = self.a[r * w..(r + 1) * w].to_vec();
            (row, self.b[r])
        };
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f != 0.0 {
                let row = &mut self.a[i * w..(i + 1) * w];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[c] = 0.0;
                self.b[i] -= f * pivot_rhs;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.cost[c] = 0.0;
            self.obj += f * pivot_rhs;
        }

        let old = self.basis[r];
        self.basis[r] = c;
        // An artificial that leaves the basis is never allowed back in.
        if old >= self.art_start {
            self.banned[old] = true;
        }
    }

    /// After phase 1, pivots any basic artificial out on a real column if
    /// one with a nonzero tableau entry exists. Rows where none exists are
    /// redundant; their artificial stays basic at value zero, harmlessly.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.rows {
            if self.basis[r] < self.art_start {
                continue;
            }
            let row = &self.a[r * self.width..(r + 1) * self.width];
            let candidate =
                (0..self.art_start).find(|&j| !self.banned[j] && row[j].abs() > PIVOT_TOL);
            if let Some(c) = candidate {
                self.pivot(r, c);
            }
        }
    }

    fn extract(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for i in 0..self.rows {
            if self.basis[i] < n {
                let v = self.b[i];
                x[self.basis[i]] = if v < 0.0 && v > -1e-9 { 0.0 } else { v };
            }
        }
        x
    }
}
