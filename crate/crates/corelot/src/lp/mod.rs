//! The feasibility linear program behind the randomized solvers.
//!
//! For a comparison set C, budget B, and approximation parameter α the
//! program has one allocation variable y_o per outcome o ∈ C\{⊥} and one
//! price variable p_{i,o} per voter/outcome pair, tied together by three
//! row groups:
//!
//! 1. the budget identity Σ_o c(o)·y_o = B,
//! 2. per-outcome price caps Σ_i p_{i,o} ≤ (α/2)·(c(o)/B)·n,
//! 3. per-voter demand floors Σ_{o' ⪰_i o} y_{o'} ≥ α·(1 − p_{i,o}).
//!
//! Feasibility is guaranteed for every α the solvers use, so a failed solve
//! indicates a bug rather than an unsatisfiable instance. Among feasible
//! points the solver minimizes Σ p_{i,o}, which pins every price to its
//! lower envelope max(0, 1 − Y_i(o)/α), where Y_i(o) is the allocation mass
//! on outcomes voter i weakly prefers to o. Lower prices weakly enlarge
//! every voter's affordable set, and the envelope form is what makes the
//! rounded lotteries behave like market demand.
//!
//! Box bounds (y_o ∈ [0, B], p_{i,o} ∈ [0, 1]) hold automatically: costs are
//! at least 1, so the budget row caps each y_o at B, and the envelope keeps
//! prices in [0, 1]. They are still part of the model for reporting and are
//! included in [`LpModel::violation`].

pub mod simplex;

use crate::model::{CIdx, SubInstance, VoterId};
use simplex::{Constraint, LinearProgram, Relation, SimplexError};
use thiserror::Error;

/// Default feasibility tolerance for [`solve_lp`].
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("alpha must be finite and nonnegative, got {0}")]
    BadAlpha(f64),
    #[error("budget must be finite and positive, got {0}")]
    BadBudget(f64),
    #[error("no affordable comparison outcomes at cost threshold {threshold}")]
    NoAffordableComparison { threshold: f64 },
    #[error("comparison subset excludes ⊥")]
    BotExcluded,
    #[error("solution shape mismatch: expected {expected}, got {got}")]
    SolutionShape { expected: usize, got: usize },
    #[error("solver violates constraints by {violation:.3e} (tolerance {tol:.3e})")]
    ToleranceExceeded { violation: f64, tol: f64 },
    #[error("linear solver failed: {0}")]
    Solver(#[from] SimplexError),
}

/// Shrinks the comparison set to the outcomes cheap enough for the rounding
/// guarantees and rescales the budget to match.
///
/// Keeps o with c(o) ≤ B/(α+1) plus ⊥, and sets the working budget to
/// α·B/(α+1). Errors when nothing but ⊥ survives; the caller then returns ⊥
/// outright.
pub fn restrict_instance<'a>(
    sub: &SubInstance<'a>,
    alpha: f64,
) -> Result<SubInstance<'a>, LpError> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(LpError::BadAlpha(alpha));
    }
    let threshold = sub.budget / (alpha + 1.0);
    let restricted = sub.with_cost_at_most(threshold, alpha * sub.budget / (alpha + 1.0));
    if restricted.only_bot() {
        return Err(LpError::NoAffordableComparison { threshold });
    }
    Ok(restricted)
}

/// The assembled program plus the index maps needed to read solutions back.
#[derive(Debug, Clone)]
pub struct LpModel {
    alpha: f64,
    budget: f64,
    voters: Vec<VoterId>,
    c: Vec<CIdx>,
    bot_pos: usize,
    costs: Vec<f64>,
    y_col: Vec<Option<usize>>,
    program: LinearProgram,
    c_labels: Vec<String>,
    voter_labels: Vec<String>,
}

/// A solved allocation/price pair, aligned with the model's comparison set
/// (the ⊥ entry of `y` and the ⊥ column of `p` are always zero).
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub y: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub max_violation: f64,
}

/// Assembles the program for the given voter set, comparison subset, and
/// budget. `alpha` may be zero, which degenerates the demand floors to
/// `Σ y ≥ 0`.
pub fn build_lp(sub: &SubInstance, alpha: f64) -> Result<LpModel, LpError> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(LpError::BadAlpha(alpha));
    }
    if !sub.budget.is_finite() || sub.budget <= 0.0 {
        return Err(LpError::BadBudget(sub.budget));
    }
    let inst = sub.instance;
    let bot_pos = sub.c.iter().position(|&j| j == inst.bot()).ok_or(LpError::BotExcluded)?;

    let k = sub.c.len();
    let n = sub.voters.len();
    let num_y = k - 1;
    let costs: Vec<f64> = sub.c.iter().map(|&j| inst.c_cost(j)).collect();

    let mut y_col = vec![None; k];
    let mut next = 0usize;
    for (pos, slot) in y_col.iter_mut().enumerate() {
        if pos != bot_pos {
            *slot = Some(next);
            next += 1;
        }
    }
    let p_col = |vi: usize, col: usize| num_y + vi * num_y + col;
    let width = num_y + n * num_y;

    let mut rows = Vec::with_capacity(1 + num_y + n * num_y);

    let mut budget_row = vec![0.0; width];
    for pos in 0..k {
        if let Some(col) = y_col[pos] {
            budget_row[col] = costs[pos];
        }
    }
    rows.push(Constraint { coeffs: budget_row, relation: Relation::Eq, rhs: sub.budget });

    for pos in 0..k {
        let Some(col) = y_col[pos] else { continue };
        let mut coeffs = vec![0.0; width];
        for vi in 0..n {
            coeffs[p_col(vi, col)] = 1.0;
        }
        rows.push(Constraint {
            coeffs,
            relation: Relation::Le,
            rhs: 0.5 * alpha * (costs[pos] / sub.budget) * n as f64,
        });
    }

    for (vi, &v) in sub.voters.iter().enumerate() {
        for pos in 0..k {
            let Some(col) = y_col[pos] else { continue };
            let rank = inst.c_position(v, sub.c[pos]);
            let mut coeffs = vec![0.0; width];
            for pos2 in 0..k {
                if let Some(col2) = y_col[pos2] {
                    if inst.c_position(v, sub.c[pos2]) <= rank {
                        coeffs[col2] = 1.0;
                    }
                }
            }
            coeffs[p_col(vi, col)] = alpha;
            rows.push(Constraint { coeffs, relation: Relation::Ge, rhs: alpha });
        }
    }

    let mut objective = vec![0.0; width];
    for cell in objective.iter_mut().skip(num_y) {
        *cell = 1.0;
    }

    let c_labels = sub
        .c
        .iter()
        .map(|&j| {
            let o = &inst.comparison_set()[j];
            if o.is_bottom() {
                "bot".to_string()
            } else {
                format!("{{{}}}", inst.atom_ids(o).join(","))
            }
        })
        .collect();
    let voter_labels = sub.voters.iter().map(|&v| inst.voter_id(v).to_string()).collect();

    Ok(LpModel {
        alpha,
        budget: sub.budget,
        voters: sub.voters.clone(),
        c: sub.c.clone(),
        bot_pos,
        costs,
        y_col,
        program: LinearProgram { objective, rows },
        c_labels,
        voter_labels,
    })
}

impl LpModel {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Comparison-set indices the model ranges over, ⊥ included.
    pub fn c(&self) -> &[CIdx] {
        &self.c
    }

    pub fn bot_pos(&self) -> usize {
        self.bot_pos
    }

    pub fn voters(&self) -> &[VoterId] {
        &self.voters
    }

    pub fn num_y_vars(&self) -> usize {
        self.c.len() - 1
    }

    pub fn num_p_vars(&self) -> usize {
        self.voters.len() * (self.c.len() - 1)
    }

    pub fn num_rows(&self) -> usize {
        self.program.rows.len()
    }

    /// The raw program, for alternative [`LpBackend`] implementations.
    pub fn program(&self) -> &LinearProgram {
        &self.program
    }

    /// Largest absolute violation of any row or box bound by `(y, p)`.
    ///
    /// `y` is aligned with [`LpModel::c`] (⊥ entry ignored); `p` has one row
    /// per voter in the same alignment.
    pub fn violation(&self, y: &[f64], p: &[Vec<f64>]) -> Result<f64, LpError> {
        let x = self.flatten(y, p)?;
        let mut worst = 0.0f64;
        for row in &self.program.rows {
            let lhs: f64 = row.coeffs.iter().zip(&x).map(|(c, v)| c * v).sum();
            let gap = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        let num_y = self.num_y_vars();
        for (j, &v) in x.iter().enumerate() {
            let upper = if j < num_y { self.budget } else { 1.0 };
            worst = worst.max(-v).max(v - upper);
        }
        Ok(worst)
    }

    fn flatten(&self, y: &[f64], p: &[Vec<f64>]) -> Result<Vec<f64>, LpError> {
        let k = self.c.len();
        if y.len() != k {
            return Err(LpError::SolutionShape { expected: k, got: y.len() });
        }
        if p.len() != self.voters.len() {
            return Err(LpError::SolutionShape { expected: self.voters.len(), got: p.len() });
        }
        let num_y = self.num_y_vars();
        let mut x = vec![0.0; num_y + self.voters.len() * num_y];
        for pos in 0..k {
            if let Some(col) = self.y_col[pos] {
                x[col] = y[pos];
            }
        }
        for (vi, row) in p.iter().enumerate() {
            if row.len() != k {
                return Err(LpError::SolutionShape { expected: k, got: row.len() });
            }
            for pos in 0..k {
                if let Some(col) = self.y_col[pos] {
                    x[num_y + vi * num_y + col] = row[pos];
                }
            }
        }
        Ok(x)
    }

    // Consumers of the solution validate the variable boxes strictly, so
    // solver arithmetic noise on a box boundary is projected out here,
    // before the violation recheck.
    fn unflatten(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let k = self.c.len();
        let num_y = self.num_y_vars();
        let mut y = vec![0.0; k];
        for pos in 0..k {
            if let Some(col) = self.y_col[pos] {
                y[pos] = x[col].clamp(0.0, self.budget);
            }
        }
        let mut p = Vec::with_capacity(self.voters.len());
        for vi in 0..self.voters.len() {
            let mut row = vec![0.0; k];
            for pos in 0..k {
                if let Some(col) = self.y_col[pos] {
                    row[pos] = x[num_y + vi * num_y + col].clamp(0.0, 1.0);
                }
            }
            p.push(row);
        }
        (y, p)
    }

    /// Renders the model in LP text format, one named row per line.
    pub fn to_lp_text(&self) -> String {
        use std::fmt::Write;

        let mut out = String::new();
        let _ = writeln!(
            out,
            "\\ alpha = {}, budget = {}, voters = {}, outcomes = {} (including bot)",
            self.alpha,
            self.budget,
            self.voters.len(),
            self.c.len()
        );
        for (pos, &j) in self.c.iter().enumerate() {
            let _ = writeln!(
                out,
                "\\ outcome {}: {} (cost {})",
                j, self.c_labels[pos], self.costs[pos]
            );
        }
        for (vi, &v) in self.voters.iter().enumerate() {
            let _ = writeln!(out, "\\ voter {}: {}", v, self.voter_labels[vi]);
        }

        let name_of = |col: usize| -> String {
            let num_y = self.num_y_vars();
            if col < num_y {
                let pos = self.y_col.iter().position(|&c| c == Some(col)).unwrap();
                format!("y{}", self.c[pos])
            } else {
                let vi = (col - num_y) / num_y;
                let inner = (col - num_y) % num_y;
                let pos = self.y_col.iter().position(|&c| c == Some(inner)).unwrap();
                format!("p{}_{}", self.voters[vi], self.c[pos])
            }
        };
        let render = |coeffs: &[f64]| -> String {
            let mut terms = Vec::new();
            for (col, &c) in coeffs.iter().enumerate() {
                if c != 0.0 {
                    if c == 1.0 {
                        terms.push(name_of(col));
                    } else {
                        terms.push(format!("{} {}", c, name_of(col)));
                    }
                }
            }
            terms.join(" + ")
        };

        out.push_str("Minimize\n");
        let _ = writeln!(out, " obj: {}", render(&self.program.objective));
        out.push_str("Subject To\n");
        let mut row_iter = self.program.rows.iter();
        let budget_row = row_iter.next().expect("model always has a budget row");
        let _ = writeln!(out, " budget: {} = {}", render(&budget_row.coeffs), budget_row.rhs);
        for pos in 0..self.c.len() {
            if self.y_col[pos].is_none() {
                continue;
            }
            let row = row_iter.next().expect("one cap row per outcome");
            let _ = writeln!(out, " cap_{}: {} <= {}", self.c[pos], render(&row.coeffs), row.rhs);
        }
        for &v in &self.voters {
            for pos in 0..self.c.len() {
                if self.y_col[pos].is_none() {
                    continue;
                }
                let row = row_iter.next().expect("one demand row per voter and outcome");
                let _ = writeln!(
                    out,
                    " dem_{}_{}: {} >= {}",
                    v,
                    self.c[pos],
                    render(&row.coeffs),
                    row.rhs
                );
            }
        }
        out.push_str("Bounds\n");
        for pos in 0..self.c.len() {
            if self.y_col[pos].is_some() {
                let _ = writeln!(out, " 0 <= y{} <= {}", self.c[pos], self.budget);
            }
        }
        for &v in &self.voters {
            for pos in 0..self.c.len() {
                if self.y_col[pos].is_some() {
                    let _ = writeln!(out, " 0 <= p{}_{} <= 1", v, self.c[pos]);
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

/// Hook for swapping in an external solver; the built-in dense simplex is
/// the default.
pub trait LpBackend {
    fn solve(&self, program: &LinearProgram) -> Result<simplex::Solution, SimplexError>;
}

/// The crate's own dense two-phase simplex.
#[derive(Debug, Default, Clone, Copy)]
pub struct BuiltinSimplex;

impl LpBackend for BuiltinSimplex {
    fn solve(&self, program: &LinearProgram) -> Result<simplex::Solution, SimplexError> {
        simplex::solve(program)
    }
}

/// Solves the model with the built-in simplex.
///
/// The model is feasible by construction for the α values the pipeline
/// produces, so an infeasibility report from the backend is a bug, not a
/// property of the instance.
pub fn solve_lp(model: &LpModel, tol: f64) -> Result<LpSolution, LpError> {
    solve_lp_with(&BuiltinSimplex, model, tol)
}

/// Solves the model with a caller-chosen backend and re-checks every row
/// against `tol` before returning.
pub fn solve_lp_with(
    backend: &dyn LpBackend,
    model: &LpModel,
    tol: f64,
) -> Result<LpSolution, LpError> {
    let sol = backend.solve(&model.program)?;
    let expected = model.num_y_vars() + model.num_p_vars();
    if sol.x.len() != expected {
        return Err(LpError::SolutionShape { expected, got: sol.x.len() });
    }
    let (y, p) = model.unflatten(&sol.x);
    let max_violation = model.violation(&y, &p)?;
    if max_violation > tol {
        return Err(LpError::ToleranceExceeded { violation: max_violation, tol });
    }
    Ok(LpSolution { y, p, objective: sol.objective, iterations: sol.iterations, max_violation })
}
