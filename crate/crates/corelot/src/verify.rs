//! Checkers for the core guarantees: exact deviator counting against a
//! comparison set, per-realization partial-core rechecks, statistical
//! coverage estimation, an independent recomputation of the feasibility
//! program's constraints, and a brute-force minimal-γ search used as
//! ground truth on tiny instances.
//!
//! Every checker returns a [`VerifyReport`]; failed checks carry a witness
//! naming the outcome, voters, and counts involved rather than raising an
//! error.

use crate::model::{CIdx, Instance, Outcome, SubInstance, VoterId};
use crate::oracle::LotterySampler;
use crate::rounding::trial_rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("comparison set has {non_bot} non-bot outcomes; 2^{non_bot} subsets exceed the enumeration guard")]
    TooManyCandidates { non_bot: usize },
}

/// One named check. Statistical checks also carry the trial count, the
/// measured value, the bound it was held against, and the slack allowed.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

impl CheckResult {
    pub fn passed(name: impl Into<String>) -> CheckResult {
        CheckResult {
            name: name.into(),
            pass: true,
            witness: None,
            trials: None,
            empirical: None,
            bound: None,
            slack: None,
        }
    }

    pub fn failed(name: impl Into<String>, witness: String) -> CheckResult {
        CheckResult {
            name: name.into(),
            pass: false,
            witness: Some(witness),
            trials: None,
            empirical: None,
            bound: None,
            slack: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    /// Smallest γ at which every checked inequality would hold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_gamma_needed: Option<f64>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn outcome_label(instance: &Instance, j: CIdx) -> String {
    let ids = instance.atom_ids(&instance.comparison_set()[j]);
    if ids.is_empty() {
        "bot".to_string()
    } else {
        ids.join("+")
    }
}

fn deviators_among(
    instance: &Instance,
    voters: &[VoterId],
    j: CIdx,
    outcome: &Outcome,
) -> Vec<VoterId> {
    voters.iter().copied().filter(|&v| instance.strictly_prefers_c(v, j, outcome)).collect()
}

/// Checks the approximate-core inequality for `outcome` against every
/// element of `c`: no alternative may be strictly preferred by more than
/// γ·(c(o)/B)·n of all voters. A budget overrun of `outcome` itself is
/// reported as a failed check. ⊥ is skipped: it costs nothing and can
/// never be strictly preferred.
pub fn check_gamma_core(
    instance: &Instance,
    outcome: &Outcome,
    gamma: f64,
    c: &[CIdx],
) -> VerifyReport {
    let budget = instance.budget();
    let n = instance.n();
    let all_voters: Vec<VoterId> = (0..n).collect();
    let mut checks = Vec::new();
    let cost = instance.cost(outcome);
    if cost <= budget + 1e-9 {
        checks.push(CheckResult::passed("budget"));
    } else {
        checks.push(CheckResult::failed(
            "budget",
            format!("outcome costs {cost} with budget {budget}"),
        ));
    }
    let mut worst = 0.0f64;
    for &j in c {
        if j == instance.bot() {
            continue;
        }
        let label = outcome_label(instance, j);
        let who = deviators_among(instance, &all_voters, j, outcome);
        let bound = gamma * instance.c_cost(j) / budget * n as f64;
        if n > 0 {
            worst = worst.max(who.len() as f64 * budget / (instance.c_cost(j) * n as f64));
        }
        let name = format!("deviators({label})");
        let mut check = if who.len() as f64 <= bound + 1e-9 {
            CheckResult::passed(name)
        } else {
            CheckResult::failed(
                name,
                format!(
                    "voters {who:?} ({} of {n}) strictly prefer {label}, bound {bound}",
                    who.len()
                ),
            )
        };
        check.empirical = Some(who.len() as f64);
        check.bound = Some(bound);
        checks.push(check);
    }
    VerifyReport { checks, worst_gamma_needed: Some(worst) }
}

/// Checks the partial-core inequality: deviators are counted within the
/// represented set `v`, and only alternatives costing at most B/ρ are
/// held to the bound. With `floor_bound` the right-hand side is floored,
/// matching the integrality of the left-hand count.
pub fn check_partial_core(
    instance: &Instance,
    outcome: &Outcome,
    v: &[VoterId],
    gamma: f64,
    c: &[CIdx],
    rho: f64,
    floor_bound: bool,
) -> VerifyReport {
    let budget = instance.budget();
    let n = instance.n();
    let mut checks = Vec::new();
    let mut worst = 0.0f64;
    for &j in c {
        if j == instance.bot() || instance.c_cost(j) > budget / rho + 1e-9 {
            continue;
        }
        let label = outcome_label(instance, j);
        let who = deviators_among(instance, v, j, outcome);
        let raw = gamma * instance.c_cost(j) / budget * n as f64;
        let bound = if floor_bound { (raw + 1e-9).floor() } else { raw };
        if n > 0 {
            worst = worst.max(who.len() as f64 * budget / (instance.c_cost(j) * n as f64));
        }
        let name = format!("partial-deviators({label})");
        let mut check = if who.len() as f64 <= bound + 1e-9 {
            CheckResult::passed(name)
        } else {
            CheckResult::failed(
                name,
                format!(
                    "represented voters {who:?} ({} of |V|={}) strictly prefer {label}, bound {bound}",
                    who.len(),
                    v.len()
                ),
            )
        };
        check.empirical = Some(who.len() as f64);
        check.bound = Some(bound);
        checks.push(check);
    }
    VerifyReport { checks, worst_gamma_needed: Some(worst) }
}

/// Per-voter empirical coverage of a sampler with distribution-free 99%
/// confidence bounds.
#[derive(Debug, Clone, Serialize)]
pub struct VoterCoverage {
    pub voter: VoterId,
    pub frequency: f64,
    pub lower99: f64,
    pub upper99: f64,
    /// True when even the upper confidence bound sits below the sampler's
    /// certified λ.
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageEstimate {
    pub trials: u64,
    pub lambda: f64,
    pub voters: Vec<VoterCoverage>,
}

impl CoverageEstimate {
    pub fn flagged(&self) -> Vec<VoterId> {
        self.voters.iter().filter(|v| v.flagged).map(|v| v.voter).collect()
    }
}

/// Draws `trials` independent realizations (seed substreams `0..trials`)
/// and reports each voter's coverage frequency with a two-sided 99%
/// Hoeffding interval, flagging voters whose interval lies entirely below
/// the sampler's certified λ. Requires `trials ≥ 100`.
pub fn estimate_coverage(sampler: &LotterySampler, trials: u64, seed: u64) -> CoverageEstimate {
    assert!(trials >= 100, "coverage estimation needs at least 100 trials");
    let voters = sampler.voters().to_vec();
    let mut hits = vec![0u64; voters.len()];
    for t in 0..trials {
        let draw = sampler
            .draw(&mut trial_rng(seed, t))
            .expect("a constructed sampler draws without error");
        let mut k = 0;
        for &covered in &draw.covered {
            while k < voters.len() && voters[k] < covered {
                k += 1;
            }
            if k < voters.len() && voters[k] == covered {
                hits[k] += 1;
            }
        }
    }
    let eps = ((2.0f64 / 0.01).ln() / (2.0 * trials as f64)).sqrt();
    let lambda = sampler.certified_lambda();
    let voters = voters
        .into_iter()
        .zip(hits)
        .map(|(voter, h)| {
            let frequency = h as f64 / trials as f64;
            let lower99 = (frequency - eps).max(0.0);
            let upper99 = (frequency + eps).min(1.0);
            VoterCoverage { voter, frequency, lower99, upper99, flagged: upper99 < lambda }
        })
        .collect();
    CoverageEstimate { trials, lambda, voters }
}

/// Recomputes the feasibility program's constraints directly from the
/// instance: the budget identity, the per-outcome price caps, the
/// per-voter demand floors, the variable boxes, and the revenue-to-cost
/// diagnostic Σ_i p_{i,o}/c(o) ≤ α·n·E[I]/B (incomes uniform on [0,1], so
/// E[I] = 1/2). Intentionally independent of the solver's own row
/// bookkeeping.
pub fn check_lp_solution(
    sub: &SubInstance,
    y: &[f64],
    p: &[Vec<f64>],
    alpha: f64,
    tol: f64,
) -> VerifyReport {
    let instance = sub.instance;
    let budget = sub.budget;
    let n = sub.voters.len();
    let mut checks = Vec::new();
    if y.len() != sub.c.len() || p.len() != n || p.iter().any(|row| row.len() != sub.c.len()) {
        checks.push(CheckResult::failed(
            "shape",
            format!(
                "expected y[{}] and p[{}][{}], got y[{}] and p[{}]",
                sub.c.len(),
                n,
                sub.c.len(),
                y.len(),
                p.len()
            ),
        ));
        return VerifyReport { checks, worst_gamma_needed: None };
    }
    checks.push(CheckResult::passed("shape"));

    let spent: f64 = sub
        .c
        .iter()
        .enumerate()
        .filter(|&(pos, _)| pos != sub.bot_pos())
        .fold(0.0, |acc, (pos, &j)| acc + instance.c_cost(j) * y[pos]);
    let budget_gap = (spent - budget).abs();
    checks.push(if budget_gap <= tol {
        CheckResult::passed("budget-row")
    } else {
        CheckResult::failed(
            "budget-row",
            format!("allocation spends {spent}, budget row requires {budget}, gap {budget_gap}"),
        )
    });

    let mut cap_violation = 0.0f64;
    let mut cap_witness = None;
    for (pos, &j) in sub.c.iter().enumerate() {
        if pos == sub.bot_pos() {
            continue;
        }
        let total: f64 = p.iter().fold(0.0, |acc, row| acc + row[pos]);
        let cap = alpha / 2.0 * instance.c_cost(j) / budget * n as f64;
        let excess = total - cap;
        if excess > cap_violation {
            cap_violation = excess;
            cap_witness =
                Some(format!("prices on {} sum to {total}, cap {cap}", outcome_label(instance, j)));
        }
    }
    checks.push(if cap_violation <= tol {
        CheckResult::passed("price-caps")
    } else {
        CheckResult::failed("price-caps", cap_witness.unwrap_or_default())
    });

    let mut demand_violation = 0.0f64;
    let mut demand_witness = None;
    for (vi, &voter) in sub.voters.iter().enumerate() {
        for (pos, &j) in sub.c.iter().enumerate() {
            if pos == sub.bot_pos() {
                continue;
            }
            let supplied: f64 = sub
                .c
                .iter()
                .enumerate()
                .filter(|&(q, &oj)| {
                    q != sub.bot_pos()
                        && instance.c_position(voter, oj) <= instance.c_position(voter, j)
                })
                .fold(0.0, |acc, (q, _)| acc + y[q]);
            let shortfall = alpha - (supplied + alpha * p[vi][pos]);
            if shortfall > demand_violation {
                demand_violation = shortfall;
                demand_witness = Some(format!(
                    "voter {voter} on {}: supplied {supplied} plus alpha*price {} misses alpha {alpha}",
                    outcome_label(instance, j),
                    alpha * p[vi][pos]
                ));
            }
        }
    }
    checks.push(if demand_violation <= tol {
        CheckResult::passed("demand-floors")
    } else {
        CheckResult::failed("demand-floors", demand_witness.unwrap_or_default())
    });

    let mut box_violation = 0.0f64;
    let mut box_witness = None;
    for (pos, &v) in y.iter().enumerate() {
        let excess = (-v).max(v - budget);
        if excess > box_violation {
            box_violation = excess;
            box_witness = Some(format!("y[{pos}] = {v} outside [0, {budget}]"));
        }
    }
    for (vi, row) in p.iter().enumerate() {
        for (pos, &v) in row.iter().enumerate() {
            let excess = (-v).max(v - 1.0);
            if excess > box_violation {
                box_violation = excess;
                box_witness = Some(format!("p[{vi}][{pos}] = {v} outside [0, 1]"));
            }
        }
    }
    checks.push(if box_violation <= tol {
        CheckResult::passed("variable-boxes")
    } else {
        CheckResult::failed("variable-boxes", box_witness.unwrap_or_default())
    });

    let mut ratio_violation = 0.0f64;
    let mut ratio_witness = None;
    let ratio_bound = alpha * n as f64 * 0.5 / budget;
    for (pos, &j) in sub.c.iter().enumerate() {
        if pos == sub.bot_pos() {
            continue;
        }
        let total: f64 = p.iter().fold(0.0, |acc, row| acc + row[pos]);
        let ratio = total / instance.c_cost(j);
        if ratio - ratio_bound > ratio_violation {
            ratio_violation = ratio - ratio_bound;
            ratio_witness = Some(format!(
                "revenue-to-cost of {} is {ratio}, bound {ratio_bound}",
                outcome_label(instance, j)
            ));
        }
    }
    checks.push(if ratio_violation <= tol {
        CheckResult::passed("revenue-to-cost")
    } else {
        CheckResult::failed("revenue-to-cost", ratio_witness.unwrap_or_default())
    });

    VerifyReport { checks, worst_gamma_needed: None }
}

/// Exhaustively searches merges of comparison-set elements for the
/// smallest achievable γ, returning it with a witness outcome. Guarded to
/// comparison sets of at most 20 non-⊥ elements.
pub fn brute_force_min_gamma(instance: &Instance) -> Result<(f64, Outcome), VerifyError> {
    let bot = instance.bot();
    let members: Vec<CIdx> = (0..instance.comparison_set().len()).filter(|&j| j != bot).collect();
    if members.len() > 20 {
        return Err(VerifyError::TooManyCandidates { non_bot: members.len() });
    }
    let budget = instance.budget();
    let c: Vec<CIdx> = (0..instance.comparison_set().len()).collect();
    let mut best: Option<(f64, Outcome)> = None;
    for mask in 0u32..(1u32 << members.len()) {
        let mut merged = Outcome::bottom();
        for (bit, &j) in members.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                merged = merged.merge(&instance.comparison_set()[j]);
            }
        }
        if instance.cost(&merged) > budget + 1e-9 {
            continue;
        }
        let report = check_gamma_core(instance, &merged, f64::INFINITY, &c);
        let needed = report.worst_gamma_needed.unwrap_or(0.0);
        if best.as_ref().map_or(true, |(g, _)| needed < *g) {
            best = Some((needed, merged));
        }
    }
    Ok(best.expect("the empty merge is always feasible"))
}
