//! Market-equilibrium building blocks over a comparison set.
//!
//! A state assigns every voter a price vector over the comparison set and
//! the producer an allocation y with Σ c(o)·y_o = B. Voters draw a random
//! income I from an [`IncomeModel`] and demand the best outcome they can
//! afford; the producer allocates the budget to outcomes maximizing revenue
//! per unit cost. The functions here evaluate one side at a time:
//! [`random_demand`] gives the exact demand distribution in closed form,
//! [`producer_best_response`] the revenue-maximizing allocation, and
//! [`leo_residual`] how far a state is from equilibrium. [`tatonnement`]
//! iterates the induced price-adjustment map; it is an experimental probe
//! with no convergence guarantee.

use crate::model::{SubInstance, VoterId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LeoError {
    #[error("price {0} outside [0,1]")]
    PriceOutOfRange(f64),
    #[error("⊥ must be priced at zero, got {0}")]
    BotPriceNotZero(f64),
    #[error("expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("income interval [{lo}, {hi}] must satisfy 0 ≤ lo < hi ≤ 1")]
    BadInterval { lo: f64, hi: f64 },
    #[error("piecewise cdf invalid: {0}")]
    BadCdf(String),
    #[error("comparison set has no outcome besides ⊥")]
    EmptyComparison,
    #[error("alpha must be finite and nonnegative, got {0}")]
    BadAlpha(f64),
    #[error("budget must be finite and positive, got {0}")]
    BadBudget(f64),
    #[error("allocation violates the budget identity by {0:.3e}")]
    BudgetIdentity(f64),
    #[error("damping must be in (0,1], got {0}")]
    BadDamping(f64),
}

/// Distribution of voter income, supported on [0,1] with a continuous cdf.
#[derive(Debug, Clone)]
pub struct IncomeModel {
    kind: IncomeKind,
}

#[derive(Debug, Clone)]
enum IncomeKind {
    Uniform01,
    Interval { lo: f64, hi: f64 },
    Piecewise { points: Vec<(f64, f64)> },
}

impl IncomeModel {
    /// Income uniform on [0,1]; the distribution the feasibility program
    /// assumes.
    pub fn uniform01() -> IncomeModel {
        IncomeModel { kind: IncomeKind::Uniform01 }
    }

    /// Income uniform on [lo, hi] ⊆ [0,1].
    pub fn uniform_interval(lo: f64, hi: f64) -> Result<IncomeModel, LeoError> {
        if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || hi > 1.0 || lo >= hi {
            return Err(LeoError::BadInterval { lo, hi });
        }
        Ok(IncomeModel { kind: IncomeKind::Interval { lo, hi } })
    }

    /// Piecewise-linear cdf through the given points, which must run from
    /// (0,0) to (1,1) with strictly increasing x and nondecreasing values.
    pub fn piecewise_cdf(points: Vec<(f64, f64)>) -> Result<IncomeModel, LeoError> {
        if points.len() < 2 {
            return Err(LeoError::BadCdf("need at least two points".into()));
        }
        if points[0] != (0.0, 0.0) {
            return Err(LeoError::BadCdf("first point must be (0,0)".into()));
        }
        if *points.last().unwrap() != (1.0, 1.0) {
            return Err(LeoError::BadCdf("last point must be (1,1)".into()));
        }
        for pair in points.windows(2) {
            if !(pair[1].0 > pair[0].0) || pair[1].1 < pair[0].1 {
                return Err(LeoError::BadCdf(format!(
                    "points ({}, {}) and ({}, {}) out of order",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        if points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(LeoError::BadCdf("non-finite point".into()));
        }
        Ok(IncomeModel { kind: IncomeKind::Piecewise { points } })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            IncomeKind::Uniform01 => "uniform01",
            IncomeKind::Interval { .. } => "uniform-interval",
            IncomeKind::Piecewise { .. } => "custom-cdf",
        }
    }

    /// Pr(I ≤ x), extended by 0 below the support and 1 above it.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            IncomeKind::Uniform01 => x.clamp(0.0, 1.0),
            IncomeKind::Interval { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            IncomeKind::Piecewise { points } => {
                if x <= 0.0 {
                    return 0.0;
                }
                if x >= 1.0 {
                    return 1.0;
                }
                let hi = points.partition_point(|&(px, _)| px <= x);
                let (x0, y0) = points[hi - 1];
                let (x1, y1) = points[hi];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Pr(I ≥ p); with a continuous cdf the boundary case has measure zero.
    pub fn survival(&self, p: f64) -> f64 {
        1.0 - self.cdf(p)
    }

    /// E[I].
    pub fn mean(&self) -> f64 {
        match &self.kind {
            IncomeKind::Uniform01 => 0.5,
            IncomeKind::Interval { lo, hi } => 0.5 * (lo + hi),
            IncomeKind::Piecewise { points } => {
                // E[I] = 1 − ∫₀¹ F(x) dx for a distribution on [0,1].
                let integral: f64 = points
                    .windows(2)
                    .map(|pair| (pair[1].0 - pair[0].0) * 0.5 * (pair[0].1 + pair[1].1))
                    .sum();
                1.0 - integral
            }
        }
    }
}

/// A voter's demand distribution, aligned with the comparison subset it was
/// computed over (⊥ included).
#[derive(Debug, Clone)]
pub struct DemandVector(Vec<f64>);

impl DemandVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for DemandVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One market state: per-voter demand `x`, allocation `y`, and prices `p`,
/// all aligned with the comparison subset (⊥ entries of `y` and `p` are 0).
#[derive(Debug, Clone)]
pub struct LeoState {
    pub x: Vec<DemandVector>,
    pub y: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

/// Distance of a state from equilibrium, one number per condition.
#[derive(Debug, Clone, Copy)]
pub struct LeoResidual {
    /// Worst gap between the recorded demands and the exact demand
    /// distribution at the state's prices.
    pub r1: f64,
    /// Worst violation of "y_o ≥ α·x_{i,o}, tight wherever p_{i,o} > 0".
    pub r2: f64,
    /// Producer revenue left on the table relative to a best response.
    pub r3: f64,
}

fn validate_prices(prices: &[f64], bot_pos: usize, k: usize) -> Result<(), LeoError> {
    if prices.len() != k {
        return Err(LeoError::Shape { expected: k, got: prices.len() });
    }
    for &p in prices {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(LeoError::PriceOutOfRange(p));
        }
    }
    if prices[bot_pos] != 0.0 {
        return Err(LeoError::BotPriceNotZero(prices[bot_pos]));
    }
    Ok(())
}

/// Exact demand distribution of one voter facing `prices`.
///
/// The voter draws income I and takes the best outcome priced within it.
/// Walking the voter's order from best to worst with the running minimum
/// mₖ of cdf values seen so far, the top outcome gets 1 − F(p), every later
/// outcome gets mₖ₋₁ − min(mₖ₋₁, F(p)), and ⊥ (priced 0, F(0) = 0) absorbs
/// the remainder, so the entries telescope to a total of 1.
pub fn random_demand(
    sub: &SubInstance,
    voter: VoterId,
    prices: &[f64],
    income: &IncomeModel,
) -> Result<DemandVector, LeoError> {
    let k = sub.c.len();
    validate_prices(prices, sub.bot_pos(), k)?;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&pos| sub.instance.c_position(voter, sub.c[pos]));

    let mut x = vec![0.0; k];
    let mut running_min = f64::INFINITY;
    for (rank, &pos) in order.iter().enumerate() {
        let f = income.cdf(prices[pos]);
        if rank == 0 {
            x[pos] = 1.0 - f;
            running_min = f;
        } else {
            let next = running_min.min(f);
            x[pos] = running_min - next;
            running_min = next;
        }
    }
    Ok(DemandVector(x))
}

/// Revenue-maximizing allocation for the producer at the given prices.
///
/// Revenue per unit of outcome o is Σ_i p_{i,o}, so the whole budget goes
/// to an outcome maximizing revenue over cost; ties break to the lowest
/// index for determinism. ⊥ is never allocated.
pub fn producer_best_response(
    prices: &[Vec<f64>],
    costs: &[f64],
    bot_pos: usize,
    budget: f64,
) -> Result<Vec<f64>, LeoError> {
    let k = costs.len();
    if k <= 1 {
        return Err(LeoError::EmptyComparison);
    }
    if !budget.is_finite() || budget <= 0.0 {
        return Err(LeoError::BadBudget(budget));
    }
    for row in prices {
        if row.len() != k {
            return Err(LeoError::Shape { expected: k, got: row.len() });
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for pos in 0..k {
        if pos == bot_pos {
            continue;
        }
        let total: f64 = prices.iter().map(|row| row[pos]).sum();
        let ratio = total / costs[pos];
        match best {
            Some((_, br)) if br >= ratio => {}
            _ => best = Some((pos, ratio)),
        }
    }
    let (winner, _) = best.expect("k > 1 guarantees a non-⊥ outcome");
    let mut y = vec![0.0; k];
    y[winner] = budget / costs[winner];
    Ok(y)
}

fn validate_state(sub: &SubInstance, state: &LeoState) -> Result<(), LeoError> {
    let k = sub.c.len();
    let n = sub.n();
    if state.y.len() != k {
        return Err(LeoError::Shape { expected: k, got: state.y.len() });
    }
    if state.p.len() != n || state.x.len() != n {
        return Err(LeoError::Shape { expected: n, got: state.p.len().min(state.x.len()) });
    }
    for row in &state.p {
        validate_prices(row, sub.bot_pos(), k)?;
    }
    for x in &state.x {
        if x.0.len() != k {
            return Err(LeoError::Shape { expected: k, got: x.0.len() });
        }
    }
    let spent: f64 = sub.c.iter().zip(&state.y).map(|(&j, y)| sub.instance.c_cost(j) * y).sum();
    let drift = (spent - sub.budget).abs();
    if drift > 1e-6 * (1.0 + sub.budget) {
        return Err(LeoError::BudgetIdentity(drift));
    }
    Ok(())
}

/// Builds a state from an allocation/price pair by computing each voter's
/// exact demand at those prices, so the demand condition holds by
/// construction.
pub fn state_from_allocation(
    sub: &SubInstance,
    y: Vec<f64>,
    p: Vec<Vec<f64>>,
    income: &IncomeModel,
) -> Result<LeoState, LeoError> {
    let mut x = Vec::with_capacity(sub.n());
    for (vi, &v) in sub.voters.iter().enumerate() {
        let row = p.get(vi).ok_or(LeoError::Shape { expected: sub.n(), got: p.len() })?;
        x.push(random_demand(sub, v, row, income)?);
    }
    let state = LeoState { x, y, p };
    validate_state(sub, &state)?;
    Ok(state)
}

/// One application of the price-adjustment map: demands and the producer
/// response are evaluated at the current prices, then each price moves by
/// the voter's excess demand α·x'_{i,o} − y_o, clamped to [0,1] (⊥ stays
/// free).
pub fn tatonnement_step(
    sub: &SubInstance,
    state: &LeoState,
    income: &IncomeModel,
    alpha: f64,
) -> Result<LeoState, LeoError> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(LeoError::BadAlpha(alpha));
    }
    validate_state(sub, state)?;
    let costs: Vec<f64> = sub.c.iter().map(|&j| sub.instance.c_cost(j)).collect();

    let mut x = Vec::with_capacity(sub.n());
    for (vi, &v) in sub.voters.iter().enumerate() {
        x.push(random_demand(sub, v, &state.p[vi], income)?);
    }
    let y = producer_best_response(&state.p, &costs, sub.bot_pos(), sub.budget)?;

    let mut p = Vec::with_capacity(sub.n());
    for vi in 0..sub.n() {
        let mut row = vec![0.0; sub.c.len()];
        for pos in 0..sub.c.len() {
            if pos == sub.bot_pos() {
                continue;
            }
            let step = alpha * x[vi][pos] - state.y[pos];
            row[pos] = (state.p[vi][pos] + step).clamp(0.0, 1.0);
        }
        p.push(row);
    }
    Ok(LeoState { x, y, p })
}

/// Runs the price-adjustment map `max_iters` times with geometric mixing of
/// old and new prices (`damping` 1.0 means no mixing) and returns the final
/// state plus the residual trace. Stops early once r2 + r3 drops under
/// `1e-9`; no convergence is guaranteed in general.
pub fn tatonnement(
    sub: &SubInstance,
    income: &IncomeModel,
    alpha: f64,
    max_iters: usize,
    damping: f64,
) -> Result<(LeoState, Vec<LeoResidual>), LeoError> {
    if !damping.is_finite() || damping <= 0.0 || damping > 1.0 {
        return Err(LeoError::BadDamping(damping));
    }
    let k = sub.c.len();
    let costs: Vec<f64> = sub.c.iter().map(|&j| sub.instance.c_cost(j)).collect();
    let zero_prices = vec![vec![0.0; k]; sub.n()];
    let y = producer_best_response(&zero_prices, &costs, sub.bot_pos(), sub.budget)?;
    let mut state = state_from_allocation(sub, y, zero_prices, income)?;

    let mut trace = Vec::with_capacity(max_iters);
    for _ in 0..max_iters {
        let next = tatonnement_step(sub, &state, income, alpha)?;
        let mut p = Vec::with_capacity(sub.n());
        for vi in 0..sub.n() {
            let row: Vec<f64> = state.p[vi]
                .iter()
                .zip(&next.p[vi])
                .map(|(old, new)| (1.0 - damping) * old + damping * new)
                .collect();
            p.push(row);
        }
        state = LeoState { x: next.x, y: next.y, p };
        let residual = leo_residual(sub, &state, income, alpha)?;
        let done = residual.r2 + residual.r3 < 1e-9;
        trace.push(residual);
        if done {
            break;
        }
    }
    Ok((state, trace))
}

/// Measures how far `state` is from an α-equilibrium.
pub fn leo_residual(
    sub: &SubInstance,
    state: &LeoState,
    income: &IncomeModel,
    alpha: f64,
) -> Result<LeoResidual, LeoError> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(LeoError::BadAlpha(alpha));
    }
    validate_state(sub, state)?;
    let k = sub.c.len();
    let costs: Vec<f64> = sub.c.iter().map(|&j| sub.instance.c_cost(j)).collect();

    let mut r1 = 0.0f64;
    for (vi, &v) in sub.voters.iter().enumerate() {
        let exact = random_demand(sub, v, &state.p[vi], income)?;
        for pos in 0..k {
            r1 = r1.max((state.x[vi][pos] - exact[pos]).abs());
        }
    }

    let mut r2 = 0.0f64;
    for vi in 0..sub.n() {
        for pos in 0..k {
            if pos == sub.bot_pos() {
                continue;
            }
            let short = (alpha * state.x[vi][pos] - state.y[pos]).max(0.0);
            let slack_at_positive_price =
                state.p[vi][pos] * (state.y[pos] - alpha * state.x[vi][pos]).max(0.0);
            r2 = r2.max(short + slack_at_positive_price);
        }
    }

    let revenue = |y: &[f64]| -> f64 {
        (0..k)
            .filter(|&pos| pos != sub.bot_pos())
            .map(|pos| {
                let total: f64 = state.p.iter().map(|row| row[pos]).sum();
                total * y[pos]
            })
            .sum()
    };
    let best = producer_best_response(&state.p, &costs, sub.bot_pos(), sub.budget)?;
    let r3 = (revenue(&best) - revenue(&state.y)).max(0.0);

    Ok(LeoResidual { r1, r2, r3 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_fixtures::T1;
    use crate::model::{load_instance, Instance};
    use proptest::prelude::*;

    fn chain_instance(n_atoms: usize, budget: f64) -> Instance {
        // Single voter ranking a0 ≻ a1 ≻ … with unit costs.
        let atoms: Vec<String> =
            (0..n_atoms).map(|i| format!(r#"{{"id": "a{}", "cost": 1}}"#, i)).collect();
        let comparison: Vec<String> = std::iter::once("[]".to_string())
            .chain((0..n_atoms).map(|i| format!(r#"["a{}"]"#, i)))
            .collect();
        let ranking: Vec<String> = (0..n_atoms).map(|i| format!(r#""a{}""#, i)).collect();
        let doc = format!(
            r#"{{
                "voters": ["v0"],
                "atoms": [{}],
                "budget": {},
                "comparison_set": [{}],
                "preferences": {{"kind": "top-element-ranking", "rankings": {{"v0": [{}]}}}}
            }}"#,
            atoms.join(", "),
            budget,
            comparison.join(", "),
            ranking.join(", ")
        );
        load_instance(&doc).unwrap()
    }

    #[test]
    fn worked_demand_example() {
        // a ≻ b ≻ c ≻ ⊥ at prices (1/2, 1/3, 1/3, 0) under uniform income:
        // demand must be (1/2, 1/6, 0, 1/3).
        let inst = chain_instance(3, 2.0);
        let sub = SubInstance::full(&inst);
        let prices = vec![0.0, 0.5, 1.0 / 3.0, 1.0 / 3.0];
        let x = random_demand(&sub, 0, &prices, &IncomeModel::uniform01()).unwrap();
        assert!((x[1] - 0.5).abs() < 1e-15);
        assert!((x[2] - 1.0 / 6.0).abs() < 1e-15);
        assert!(x[3].abs() < 1e-15);
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn free_outcomes_all_go_to_the_top() {
        let inst = chain_instance(3, 2.0);
        let sub = SubInstance::full(&inst);
        let x = random_demand(&sub, 0, &[0.0; 4], &IncomeModel::uniform01()).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn unaffordable_outcomes_leave_only_bot() {
        let inst = chain_instance(3, 2.0);
        let sub = SubInstance::full(&inst);
        let prices = vec![0.0, 1.0, 1.0, 1.0];
        let x = random_demand(&sub, 0, &prices, &IncomeModel::uniform01()).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn demand_rejects_bad_prices() {
        let inst = chain_instance(2, 2.0);
        let sub = SubInstance::full(&inst);
        let income = IncomeModel::uniform01();
        assert!(matches!(
            random_demand(&sub, 0, &[0.0, 1.5, 0.0], &income),
            Err(LeoError::PriceOutOfRange(_))
        ));
        assert!(matches!(
            random_demand(&sub, 0, &[0.5, 0.0, 0.0], &income),
            Err(LeoError::BotPriceNotZero(_))
        ));
    }

    #[test]
    fn producer_takes_the_best_ratio() {
        // Totals (3, 1) at unit costs: the whole budget funds the first.
        let prices = vec![vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]];
        let y = producer_best_response(&prices, &[0.0, 1.0, 1.0], 0, 2.0).unwrap();
        assert_eq!(y, vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn producer_tie_breaks_to_lowest_index() {
        // Totals (2, 4) over costs (1, 2) tie at ratio 2.
        let prices = vec![vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 1.0]];
        let y = producer_best_response(&prices, &[0.0, 1.0, 2.0], 0, 3.0).unwrap();
        assert_eq!(y, vec![0.0, 3.0, 0.0]);
    }

    #[test]
    fn producer_handles_all_zero_prices() {
        let prices = vec![vec![0.0, 0.0, 0.0]];
        let y = producer_best_response(&prices, &[0.0, 2.0, 1.0], 0, 4.0).unwrap();
        assert_eq!(y, vec![0.0, 2.0, 0.0]);
        assert!(matches!(
            producer_best_response(&prices, &[0.0], 0, 1.0),
            Err(LeoError::EmptyComparison)
        ));
    }

    #[test]
    fn exact_state_is_a_fixed_point_of_the_step() {
        // Single outcome at price 0: demand 1, allocation 1, all residuals 0.
        let inst = chain_instance(1, 1.0);
        let sub = SubInstance::full(&inst);
        let income = IncomeModel::uniform01();
        let state =
            state_from_allocation(&sub, vec![0.0, 1.0], vec![vec![0.0, 0.0]], &income).unwrap();
        let before = leo_residual(&sub, &state, &income, 1.0).unwrap();
        assert_eq!((before.r1, before.r2, before.r3), (0.0, 0.0, 0.0));

        let after = tatonnement_step(&sub, &state, &income, 1.0).unwrap();
        let res = leo_residual(&sub, &after, &income, 1.0).unwrap();
        assert_eq!((res.r1, res.r2, res.r3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unmet_demand_raises_the_price() {
        let inst = chain_instance(2, 2.0);
        let sub = SubInstance::full(&inst);
        let income = IncomeModel::uniform01();
        // All allocation sits on the second-ranked outcome; the top one is
        // demanded at price 0 but unallocated.
        let state =
            state_from_allocation(&sub, vec![0.0, 0.0, 2.0], vec![vec![0.0; 3]], &income).unwrap();
        let next = tatonnement_step(&sub, &state, &income, 0.7).unwrap();
        assert!((next.p[0][1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn excess_supply_lowers_the_price() {
        let inst = chain_instance(2, 2.0);
        let sub = SubInstance::full(&inst);
        let income = IncomeModel::uniform01();
        // The less-preferred outcome carries allocation and a positive
        // price, but demand for it is zero.
        let state =
            state_from_allocation(&sub, vec![0.0, 0.0, 2.0], vec![vec![0.0, 0.0, 0.6]], &income)
                .unwrap();
        assert_eq!(state.x[0].as_slice(), &[0.0, 1.0, 0.0]);
        let next = tatonnement_step(&sub, &state, &income, 1.0).unwrap();
        assert!(next.p[0][2] < 0.6);
        assert_eq!(next.p[0][2], 0.0);
    }

    #[test]
    fn r2_flags_an_undersupplied_outcome() {
        let inst = chain_instance(2, 2.0);
        let sub = SubInstance::full(&inst);
        let income = IncomeModel::uniform01();
        // Demand 1 on the top outcome but allocation 0.9 on it: r2 ≥ 0.1.
        let state =
            state_from_allocation(&sub, vec![0.0, 0.9, 1.1], vec![vec![0.0, 0.0, 0.0]], &income)
                .unwrap();
        let res = leo_residual(&sub, &state, &income, 1.0).unwrap();
        assert!(res.r2 >= 0.1 - 1e-12);
    }

    #[test]
    fn r3_flags_a_non_maximizing_allocation() {
        let inst = chain_instance(2, 2.0);
        let sub = SubInstance::full(&inst);
        let income = IncomeModel::uniform01();
        // Prices make the first outcome strictly more profitable, but the
        // allocation funds the second.
        let state =
            state_from_allocation(&sub, vec![0.0, 0.0, 2.0], vec![vec![0.0, 0.8, 0.2]], &income)
                .unwrap();
        let res = leo_residual(&sub, &state, &income, 1.0).unwrap();
        assert!(res.r3 > 0.5);
    }

    #[test]
    fn solved_program_gives_a_market_state_with_zero_demand_residual() {
        let inst = load_instance(T1).unwrap();
        let sub = crate::lp::restrict_instance(&SubInstance::full(&inst), 1.0).unwrap();
        let model = crate::lp::build_lp(&sub, 1.0).unwrap();
        let sol = crate::lp::solve_lp(&model, crate::lp::DEFAULT_TOL).unwrap();
        let income = IncomeModel::uniform01();
        let state = state_from_allocation(&sub, sol.y.clone(), sol.p.clone(), &income).unwrap();
        let res = leo_residual(&sub, &state, &income, 1.0).unwrap();
        assert_eq!(res.r1, 0.0);
        assert!(res.r2 <= 1e-9, "r2 = {}", res.r2);
        let revenue_cap = 1.0 * sub.n() as f64 * income.mean();
        assert!(res.r3 <= revenue_cap + 1e-9);
    }

    #[test]
    fn income_model_validation() {
        assert!(IncomeModel::uniform_interval(0.2, 0.2).is_err());
        assert!(IncomeModel::uniform_interval(-0.1, 0.5).is_err());
        assert!(IncomeModel::uniform_interval(0.5, 1.1).is_err());
        assert!(IncomeModel::piecewise_cdf(vec![(0.0, 0.0)]).is_err());
        assert!(IncomeModel::piecewise_cdf(vec![(0.0, 0.0), (0.5, 0.9), (1.0, 0.8)]).is_err());
        assert!(IncomeModel::piecewise_cdf(vec![(0.0, 0.0), (0.5, 0.1), (1.0, 1.0)]).is_ok());
    }

    #[test]
    fn income_means() {
        assert_eq!(IncomeModel::uniform01().mean(), 0.5);
        assert_eq!(IncomeModel::uniform_interval(0.2, 0.6).unwrap().mean(), 0.4);
        let skewed = IncomeModel::piecewise_cdf(vec![(0.0, 0.0), (0.5, 0.1), (1.0, 1.0)]).unwrap();
        // ∫F = 0.5·(0+0.1)/2 + 0.5·(0.1+1)/2 = 0.3, mean = 0.7.
        assert!((skewed.mean() - 0.7).abs() < 1e-15);
        assert!((skewed.cdf(0.25) - 0.05).abs() < 1e-15);
        assert!((skewed.cdf(0.75) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn tatonnement_runs_and_reports_residuals() {
        let inst = load_instance(T1).unwrap();
        let sub = SubInstance::full(&inst);
        let income = IncomeModel::uniform01();
        let (state, trace) = tatonnement(&sub, &income, 1.0, 25, 0.5).unwrap();
        assert!(!trace.is_empty());
        validate_state(&sub, &state).unwrap();
    }

    proptest! {
        #[test]
        fn demand_is_a_distribution(
            raw in proptest::collection::vec(0.0f64..=1.0, 5),
            pick in 0usize..3,
        ) {
            let inst = chain_instance(5, 3.0);
            let sub = SubInstance::full(&inst);
            let mut prices = vec![0.0];
            prices.extend(raw.iter().cloned());
            let incomes = [
                IncomeModel::uniform01(),
                IncomeModel::uniform_interval(0.1, 0.9).unwrap(),
                IncomeModel::piecewise_cdf(vec![(0.0, 0.0), (0.3, 0.6), (1.0, 1.0)]).unwrap(),
            ];
            let x = random_demand(&sub, 0, &prices, &incomes[pick]).unwrap();
            let total: f64 = x.as_slice().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            for &v in x.as_slice() {
                prop_assert!((-1e-15..=1.0 + 1e-12).contains(&v));
            }
        }

        #[test]
        fn demand_is_continuous_in_prices(
            raw in proptest::collection::vec(0.05f64..=0.95, 4),
            bumps in proptest::collection::vec(-1.0f64..=1.0, 4),
        ) {
            let delta = 1e-3;
            let inst = chain_instance(4, 3.0);
            let sub = SubInstance::full(&inst);
            let income = IncomeModel::uniform01();
            let mut prices = vec![0.0];
            prices.extend(raw.iter().cloned());
            let mut moved = prices.clone();
            for (slot, bump) in moved[1..].iter_mut().zip(&bumps) {
                *slot = (*slot + bump * delta).clamp(0.0, 1.0);
            }
            let a = random_demand(&sub, 0, &prices, &income).unwrap();
            let b = random_demand(&sub, 0, &moved, &income).unwrap();
            let worst = a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(u, v)| (u - v).abs())
                .fold(0.0f64, f64::max);
            prop_assert!(worst <= 5.0 * delta + 1e-12);
        }

        #[test]
        fn producer_support_is_scale_invariant(
            raw in proptest::collection::vec(0.0f64..=1.0, 6),
            scale in 0.1f64..=10.0,
        ) {
            let prices = vec![raw[0..3].to_vec(), raw[3..6].to_vec()];
            let mut zeroed = prices.clone();
            for row in &mut zeroed {
                row[0] = 0.0;
            }
            let scaled: Vec<Vec<f64>> = zeroed
                .iter()
                .map(|row| row.iter().map(|p| (p * scale).min(1.0)).collect())
                .collect();
            let costs = [0.0, 2.0, 3.0];
            let y1 = producer_best_response(&zeroed, &costs, 0, 6.0).unwrap();
            // min(·,1) can reorder ratios; only compare when no price got
            // clamped.
            if scaled
                .iter()
                .flatten()
                .zip(zeroed.iter().flatten())
                .all(|(s, z)| (s - z * scale).abs() < 1e-12)
            {
                let y2 = producer_best_response(&scaled, &costs, 0, 6.0).unwrap();
                let support1: Vec<usize> =
                    (0..3).filter(|&i| y1[i] > 0.0).collect();
                let support2: Vec<usize> =
                    (0..3).filter(|&i| y2[i] > 0.0).collect();
                prop_assert_eq!(support1, support2);
            }
        }
    }
}
