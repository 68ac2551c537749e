//! Iterated rounding: repeated partial-core oracle calls on geometrically
//! shrinking budgets and the not-yet-covered voters, merged into one
//! deterministic outcome, plus the closed-form approximation-ratio
//! calculators for both variants.
//!
//! Round t works with budget B_t = B_0/ω^t where B_0 = ((ω−1)/ω)·B, so the
//! merged outcome costs at most Σ_t B_t = B. Voters covered in a round are
//! dropped; once affordability or coverage empties the pool the
//! accumulated outcome is final.

use crate::model::{Instance, Outcome, SubInstance, VoterId};
use crate::oracle::{randomized_core_sampler, rho_core_sampler, OracleError, OracleParams};
use crate::rounding::{PartialCoreSolution, SampleParams};
use rand::{Rng, RngCore};
use thiserror::Error;

/// Default headroom between an oracle's per-draw coverage level and the
/// retry target, keeping the expected number of redraws small.
pub const DEFAULT_LAMBDA_SLACK: f64 = 0.02;

#[derive(Debug, Error)]
pub enum IterativeError {
    #[error("omega must be finite and greater than 1, got {0}")]
    BadOmega(f64),
    #[error("lambda must be in (0,1), got {0}")]
    BadLambda(f64),
    #[error("requires omega*(1-lambda) < 1, got omega {omega} with lambda {lambda}")]
    CoverageContraction { omega: f64, lambda: f64 },
    #[error("requires gamma/rho >= 1 - omega*(1-lambda): {gamma_over_rho} < {threshold}")]
    GammaRhoImbalance { gamma_over_rho: f64, threshold: f64 },
    #[error("round {round}: {source}")]
    RoundFailed { round: usize, source: OracleError },
    #[error("no progress after {limit} rounds")]
    RoundLimit { limit: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

fn check_omega(omega: f64) -> Result<(), IterativeError> {
    if !omega.is_finite() || omega <= 1.0 {
        return Err(IterativeError::BadOmega(omega));
    }
    Ok(())
}

fn check_contraction(omega: f64, lambda: f64) -> Result<(), IterativeError> {
    if !(omega * (1.0 - lambda) < 1.0) {
        return Err(IterativeError::CoverageContraction { omega, lambda });
    }
    Ok(())
}

/// Approximation ratio of the plain iterated-rounding variant:
/// max{(ω/(ω−1))·γ/(1−ω(1−λ)), ω/(ω−1)}.
pub fn ratio_omega(lambda: f64, gamma: f64, omega: f64) -> Result<f64, IterativeError> {
    check_omega(omega)?;
    check_contraction(omega, lambda)?;
    let head = omega / (omega - 1.0);
    Ok((head * gamma / (1.0 - omega * (1.0 - lambda))).max(head))
}

/// Approximation ratio of the cost-restricted variant:
/// γ·(ω/(ω−1))/(1−ω(1−λ)).
pub fn ratio_f(lambda: f64, gamma: f64, omega: f64) -> Result<f64, IterativeError> {
    check_omega(omega)?;
    check_contraction(omega, lambda)?;
    Ok(gamma * (omega / (omega - 1.0)) / (1.0 - omega * (1.0 - lambda)))
}

/// Minimizes [`ratio_omega`] over ω ∈ (1, 1/(1−λ)), returning the best ω
/// and its ratio. The ratio blows up at both ends of the interval, so a
/// coarse scan brackets the dip and a golden-section pass refines it.
pub fn minimize_ratio_omega(lambda: f64, gamma: f64) -> Result<(f64, f64), IterativeError> {
    if !lambda.is_finite() || lambda <= 0.0 || lambda >= 1.0 {
        return Err(IterativeError::BadLambda(lambda));
    }
    let hi = 1.0 / (1.0 - lambda);
    let span = hi - 1.0;
    let eval = |omega: f64| {
        let head = omega / (omega - 1.0);
        (head * gamma / (1.0 - omega * (1.0 - lambda))).max(head)
    };
    let grid = 512;
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..grid {
        let omega = 1.0 + span * (i as f64 + 0.5) / grid as f64;
        let v = eval(omega);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut a = 1.0 + span * (best_i as f64 - 0.5).max(0.25) / grid as f64;
    let mut b = 1.0 + span * (best_i as f64 + 1.5).min(grid as f64 - 0.25) / grid as f64;
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..200 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = eval(x2);
        }
        if (b - a).abs() < 1e-13 * (1.0 + b.abs()) {
            break;
        }
    }
    let omega = 0.5 * (a + b);
    Ok((omega, eval(omega)))
}

/// A per-round partial-core solver the iteration can call: given the
/// round's voters, affordable outcomes, and budget, it returns one
/// realization plus the number of redraws spent, certifying the levels it
/// advertises.
pub trait PartialCoreOracle {
    /// Coverage level the certification arithmetic uses.
    fn certified_lambda(&self) -> f64;
    /// Per-realization approximation level against the round budget.
    fn certified_gamma(&self) -> f64;
    /// Cost-threshold divisor the γ guarantee is restricted to.
    fn certified_rho(&self) -> f64 {
        1.0
    }
    fn solve(
        &self,
        sub: &SubInstance,
        rng: &mut dyn RngCore,
    ) -> Result<(PartialCoreSolution, usize), OracleError>;
}

/// The lottery-backed oracle certified against every in-budget
/// alternative.
#[derive(Debug, Clone)]
pub struct StandardOracle {
    pub params: OracleParams,
}

impl StandardOracle {
    /// Targets the per-draw coverage level 1−e^{−α(1−τ)} minus
    /// [`DEFAULT_LAMBDA_SLACK`].
    pub fn new(alpha: f64, tau: f64) -> StandardOracle {
        let mut params = OracleParams::new(alpha, tau);
        params.lambda_target = (-f64::exp_m1(-alpha * (1.0 - tau)) - DEFAULT_LAMBDA_SLACK).max(0.0);
        StandardOracle { params }
    }
}

impl PartialCoreOracle for StandardOracle {
    fn certified_lambda(&self) -> f64 {
        -f64::exp_m1(-self.params.alpha * (1.0 - self.params.tau))
    }

    fn certified_gamma(&self) -> f64 {
        SampleParams {
            alpha: self.params.alpha,
            tau: self.params.tau,
            budget_scale: (self.params.alpha + 1.0) / self.params.alpha,
            rho: 1.0,
            income_mean: 0.5,
        }
        .certified_gamma()
    }

    fn solve(
        &self,
        sub: &SubInstance,
        mut rng: &mut dyn RngCore,
    ) -> Result<(PartialCoreSolution, usize), OracleError> {
        let sampler = randomized_core_sampler(sub, self.params.alpha, self.params.tau)?;
        sampler.draw_meeting(self.params.lambda_target, self.params.max_tries, &mut rng)
    }
}

/// The lottery-backed oracle certified only against alternatives of cost
/// at most B/ρ.
///
/// Its reported λ = 1−e^{−α} is the limiting coverage level as the price
/// cutoff τ → 0 and is the constant the ratio calculators consume. A
/// single draw at the working cutoff covers each voter with probability
/// 1−e^{−α(1−τ)}, so the redraw target defaults to that level minus
/// [`DEFAULT_LAMBDA_SLACK`].
#[derive(Debug, Clone)]
pub struct RhoOracle {
    pub params: OracleParams,
}

impl RhoOracle {
    pub fn new(alpha: f64, rho: f64) -> RhoOracle {
        let mut params = OracleParams::new(alpha, 0.5);
        params.rho = rho;
        params.lambda_target = (-f64::exp_m1(-alpha * 0.5) - DEFAULT_LAMBDA_SLACK).max(0.0);
        RhoOracle { params }
    }
}

impl PartialCoreOracle for RhoOracle {
    fn certified_lambda(&self) -> f64 {
        -f64::exp_m1(-self.params.alpha)
    }

    fn certified_gamma(&self) -> f64 {
        SampleParams {
            alpha: self.params.alpha,
            tau: self.params.tau,
            budget_scale: self.params.rho / (self.params.rho - 1.0),
            rho: self.params.rho,
            income_mean: 0.5,
        }
        .certified_gamma()
    }

    fn certified_rho(&self) -> f64 {
        self.params.rho
    }

    fn solve(
        &self,
        sub: &SubInstance,
        mut rng: &mut dyn RngCore,
    ) -> Result<(PartialCoreSolution, usize), OracleError> {
        let sampler = rho_core_sampler(sub, self.params.alpha, self.params.rho, self.params.tau)?;
        sampler.draw_meeting(self.params.lambda_target, self.params.max_tries, &mut rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    V1,
    V2,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::V1 => "v1",
            Variant::V2 => "v2",
        }
    }
}

/// One round of the schedule as it actually ran.
#[derive(Debug, Clone)]
pub struct RoundTrace {
    pub round: usize,
    /// B_t, the budget this round's oracle ran with.
    pub budget: f64,
    /// V_t, the voters still uncovered when the round started.
    pub voters: Vec<VoterId>,
    /// Draws the oracle spent meeting its coverage target.
    pub tries: usize,
    pub outcome: Outcome,
    pub covered: Vec<VoterId>,
    pub realized_cost: f64,
}

/// The full run record: ω, B_0, and every round in order.
#[derive(Debug, Clone)]
pub struct IterationSchedule {
    pub omega: f64,
    pub initial_budget: f64,
    pub variant: Variant,
    pub rounds: Vec<RoundTrace>,
}

/// Final outcome plus the schedule that produced it.
#[derive(Debug, Clone)]
pub struct IterationRun {
    pub outcome: Outcome,
    pub schedule: IterationSchedule,
}

fn round_limit(n: usize, lambda: f64, budget: f64, omega: f64) -> usize {
    let by_coverage = if lambda > 0.0 && lambda < 1.0 {
        ((n.max(2) as f64).ln() / -(1.0 - lambda).ln()).ceil()
    } else {
        0.0
    };
    let by_budget = if budget > 1.0 { (budget.ln() / omega.ln()).ceil() } else { 0.0 };
    by_coverage.max(by_budget) as usize + 16
}

fn run_rounds(
    instance: &Instance,
    oracle: &dyn PartialCoreOracle,
    omega: f64,
    variant: Variant,
    rng: &mut dyn RngCore,
) -> Result<IterationRun, IterativeError> {
    let initial_budget = (omega - 1.0) / omega * instance.budget();
    let mut budget = initial_budget;
    let mut voters: Vec<VoterId> = (0..instance.n()).collect();
    let mut merged = Outcome::bottom();
    let mut rounds = Vec::new();
    let limit = round_limit(instance.n(), oracle.certified_lambda(), instance.budget(), omega);
    while !voters.is_empty() {
        let round = rounds.len();
        if round >= limit {
            return Err(IterativeError::RoundLimit { limit });
        }
        let mut base = SubInstance::full(instance);
        base.voters = voters.clone();
        let round_sub = base.with_cost_at_most(budget, budget);
        let (draw, tries) = oracle
            .solve(&round_sub, &mut *rng)
            .map_err(|source| IterativeError::RoundFailed { round, source })?;
        merged = merged.merge(&draw.outcome);
        voters.retain(|v| draw.covered.binary_search(v).is_err());
        rounds.push(RoundTrace {
            round,
            budget,
            voters: round_sub.voters,
            tries,
            outcome: draw.outcome,
            covered: draw.covered,
            realized_cost: draw.realized_cost,
        });
        budget /= omega;
    }
    Ok(IterationRun {
        outcome: merged,
        schedule: IterationSchedule { omega, initial_budget, variant, rounds },
    })
}

/// Runs the plain iterated rounding with the given per-round oracle.
///
/// Requires ω > 1 and ω(1−λ) < 1 for the oracle's certified λ. The merged
/// output costs at most Σ_t B_t = B on every run. Rounds whose restricted
/// comparison set holds only ⊥ come back as (⊥, all remaining voters), so
/// the loop always terminates once budgets fall below the cheapest atom.
pub fn iterated_rounding(
    instance: &Instance,
    oracle: &dyn PartialCoreOracle,
    omega: f64,
    rng: &mut impl Rng,
) -> Result<IterationRun, IterativeError> {
    check_omega(omega)?;
    check_contraction(omega, oracle.certified_lambda())?;
    run_rounds(instance, oracle, omega, Variant::V1, rng)
}

/// Certification levels of the cost-restricted oracle at a given α and ρ:
/// λ = 1−e^{−α} and γ = α·ρ/(ρ−1).
pub fn v2_levels(alpha: f64, rho: f64) -> (f64, f64) {
    (-f64::exp_m1(-alpha), alpha * rho / (rho - 1.0))
}

/// Runs iterated rounding with the cost-restricted oracle at the given α
/// and ρ, checking both preconditions of its certification: ω(1−λ) < 1
/// and γ/ρ ≥ 1−ω(1−λ). The error names whichever inequality fails. The
/// output is certified at [`ratio_f`] of the levels from [`v2_levels`].
pub fn iterated_rounding_v2(
    instance: &Instance,
    alpha: f64,
    rho: f64,
    omega: f64,
    rng: &mut impl Rng,
) -> Result<IterationRun, IterativeError> {
    iterated_rounding_v2_with(instance, &RhoOracle::new(alpha, rho), omega, rng)
}

/// [`iterated_rounding_v2`] with a caller-configured oracle, for tuning
/// the redraw target or retry limit while keeping the same precondition
/// checks.
pub fn iterated_rounding_v2_with(
    instance: &Instance,
    oracle: &RhoOracle,
    omega: f64,
    rng: &mut impl Rng,
) -> Result<IterationRun, IterativeError> {
    check_omega(omega)?;
    oracle.params.validate()?;
    if oracle.params.rho <= 1.0 {
        return Err(OracleError::BadRho(oracle.params.rho).into());
    }
    let (lambda, gamma) = v2_levels(oracle.params.alpha, oracle.params.rho);
    check_contraction(omega, lambda)?;
    let threshold = 1.0 - omega * (1.0 - lambda);
    if gamma / oracle.params.rho < threshold {
        return Err(IterativeError::GammaRhoImbalance {
            gamma_over_rho: gamma / oracle.params.rho,
            threshold,
        });
    }
    run_rounds(instance, oracle, omega, Variant::V2, rng)
}
