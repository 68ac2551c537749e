//! Randomized-core samplers and the partial-core oracles built on them.
//!
//! A sampler restricts the comparison set to outcomes cheap enough that a
//! rounded draw plus the restriction slack stays within the original
//! budget, solves the feasibility program on the shrunken budget, and draws
//! outcomes from the dependent lottery. Every draw certifies the same γ
//! against the working outcomes; the λ level says how likely each voter is
//! to be covered. The oracles turn the per-voter probability into a set
//! guarantee by redrawing until a single realization covers ⌈λ_target·n⌉
//! voters at once.

use crate::lp::{build_lp, restrict_instance, solve_lp, LpError, DEFAULT_TOL};
use crate::model::{CIdx, SubInstance, VoterId};
use crate::rounding::{sample_partial_core, PartialCoreSolution, RoundingError, SampleParams};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("alpha must be finite and positive, got {0}")]
    BadAlpha(f64),
    #[error("tau must be in (0,1), got {0}")]
    BadTau(f64),
    #[error("lambda target must be in [0,1), got {0}")]
    BadLambdaTarget(f64),
    #[error("rho must be greater than 1, got {0}")]
    BadRho(f64),
    #[error("max_tries must be positive")]
    BadTries,
    #[error("coverage target not met after {tries} draws: needed {needed}, best covered {}",
            best.covered.len())]
    CoverageNotMet {
        tries: usize,
        needed: usize,
        /// The draw with the largest covered set seen before giving up.
        best: Box<PartialCoreSolution>,
    },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Rounding(#[from] RoundingError),
}

/// Knobs for the partial-core oracles.
#[derive(Debug, Clone, Copy)]
pub struct OracleParams {
    pub alpha: f64,
    pub tau: f64,
    /// Fraction of voters a single returned realization must cover. Keeping
    /// it at or below the sampler's certified λ makes the expected number
    /// of retries constant; above that level the retry loop alone carries
    /// the burden and may exhaust `max_tries`.
    pub lambda_target: f64,
    /// Cost-threshold divisor for [`rho_partial_core_oracle`]; ignored by
    /// the plain oracle.
    pub rho: f64,
    pub max_tries: usize,
}

impl OracleParams {
    pub fn new(alpha: f64, tau: f64) -> OracleParams {
        OracleParams { alpha, tau, lambda_target: 0.0, rho: 1.0, max_tries: 64 }
    }

    pub(crate) fn validate(&self) -> Result<(), OracleError> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(OracleError::BadAlpha(self.alpha));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 || self.tau >= 1.0 {
            return Err(OracleError::BadTau(self.tau));
        }
        if !self.lambda_target.is_finite() || !(0.0..1.0).contains(&self.lambda_target) {
            return Err(OracleError::BadLambdaTarget(self.lambda_target));
        }
        if !self.rho.is_finite() || self.rho < 1.0 {
            return Err(OracleError::BadRho(self.rho));
        }
        if self.max_tries == 0 {
            return Err(OracleError::BadTries);
        }
        Ok(())
    }
}

/// A ready-to-draw lottery: the solved allocation and prices on the
/// restricted working set, plus the levels every draw certifies.
#[derive(Debug, Clone)]
pub struct LotterySampler<'a> {
    pub(crate) sub: SubInstance<'a>,
    pub(crate) y: Vec<f64>,
    pub(crate) p: Vec<Vec<f64>>,
    pub(crate) params: SampleParams,
    pub(crate) certified_lambda: f64,
    pub(crate) original_budget: f64,
    pub(crate) degenerate: bool,
}

impl<'a> LotterySampler<'a> {
    /// Per-voter coverage probability the sampler certifies.
    pub fn certified_lambda(&self) -> f64 {
        self.certified_lambda
    }

    /// Approximation level every single draw certifies, stated against the
    /// original budget.
    pub fn certified_gamma(&self) -> f64 {
        self.params.certified_gamma()
    }

    pub fn certified_rho(&self) -> f64 {
        self.params.rho
    }

    /// True when the restriction left nothing affordable and the sampler
    /// always returns (⊥, all voters).
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn working_budget(&self) -> f64 {
        self.sub.budget
    }

    /// Budget of the instance the sampler was built from; certification
    /// levels are stated against it.
    pub fn original_budget(&self) -> f64 {
        self.original_budget
    }

    pub fn working_outcomes(&self) -> &[CIdx] {
        &self.sub.c
    }

    /// Voters the coverage guarantee speaks about.
    pub fn voters(&self) -> &[VoterId] {
        &self.sub.voters
    }

    pub fn allocation(&self) -> &[f64] {
        &self.y
    }

    pub fn prices(&self) -> &[Vec<f64>] {
        &self.p
    }

    /// Draws one realization of the lottery.
    pub fn draw(&self, rng: &mut impl Rng) -> Result<PartialCoreSolution, OracleError> {
        if self.degenerate {
            return Ok(PartialCoreSolution {
                outcome: crate::model::Outcome::bottom(),
                covered: self.sub.voters.clone(),
                certified_gamma: self.params.certified_gamma(),
                certified_rho: self.params.rho,
                realized_cost: 0.0,
            });
        }
        Ok(sample_partial_core(&self.sub, &self.y, &self.p, &self.params, rng)?)
    }

    /// Redraws until one realization covers ⌈lambda_target·n⌉ voters and
    /// returns it together with the number of draws used.
    pub fn draw_meeting(
        &self,
        lambda_target: f64,
        max_tries: usize,
        rng: &mut impl Rng,
    ) -> Result<(PartialCoreSolution, usize), OracleError> {
        if max_tries == 0 {
            return Err(OracleError::BadTries);
        }
        // The small slack keeps an exactly-integral λ·n from ceiling one
        // higher through float noise.
        let needed = ((lambda_target * self.sub.n() as f64) - 1e-9).ceil().max(0.0) as usize;
        let mut best: Option<PartialCoreSolution> = None;
        for tries in 1..=max_tries {
            let draw = self.draw(rng)?;
            if draw.covered.len() >= needed {
                return Ok((draw, tries));
            }
            if best.as_ref().map_or(true, |b| b.covered.len() < draw.covered.len()) {
                best = Some(draw);
            }
        }
        Err(OracleError::CoverageNotMet {
            tries: max_tries,
            needed,
            best: Box::new(best.expect("max_tries is positive")),
        })
    }
}

fn sampler_from_restriction<'a>(
    restricted: SubInstance<'a>,
    alpha: f64,
    tau: f64,
    budget_scale: f64,
    rho: f64,
    certified_lambda: f64,
    original_budget: f64,
) -> Result<LotterySampler<'a>, OracleError> {
    let params = SampleParams { alpha, tau, budget_scale, rho, income_mean: 0.5 };
    if restricted.only_bot() {
        return Ok(LotterySampler {
            y: vec![0.0; restricted.c.len()],
            p: vec![vec![0.0; restricted.c.len()]; restricted.n()],
            sub: restricted,
            params,
            certified_lambda,
            original_budget,
            degenerate: true,
        });
    }
    let model = build_lp(&restricted, alpha)?;
    let sol = solve_lp(&model, DEFAULT_TOL)?;
    Ok(LotterySampler {
        sub: restricted,
        y: sol.y,
        p: sol.p,
        params,
        certified_lambda,
        original_budget,
        degenerate: false,
    })
}

/// Builds the sampler whose draws cover each voter with probability at
/// least λ = 1 − e^{−α(1−τ)} and certify γ = (α+1)/(2τ) against every
/// alternative within the original budget.
///
/// The working set keeps outcomes costing at most B/(α+1) on a working
/// budget of α·B/(α+1), so any draw costs at most the original B. When the
/// restriction leaves only ⊥ the sampler is degenerate: it returns
/// (⊥, all voters), and the γ bound is vacuous for τ ≤ 1/2 because every
/// excluded alternative already costs more than B/(α+1).
pub fn randomized_core_sampler<'a>(
    sub: &SubInstance<'a>,
    alpha: f64,
    tau: f64,
) -> Result<LotterySampler<'a>, OracleError> {
    OracleParams::new(alpha, tau).validate()?;
    let restricted = match restrict_instance(sub, alpha) {
        Ok(r) => r,
        Err(LpError::NoAffordableComparison { threshold }) => {
            sub.with_cost_at_most(threshold, alpha * sub.budget / (alpha + 1.0))
        }
        Err(e) => return Err(e.into()),
    };
    let budget_scale = (alpha + 1.0) / alpha;
    let certified_lambda = -f64::exp_m1(-alpha * (1.0 - tau));
    sampler_from_restriction(
        restricted,
        alpha,
        tau,
        budget_scale,
        1.0,
        certified_lambda,
        sub.budget,
    )
}

/// Builds the sampler for guarantees against alternatives of cost at most
/// B/ρ: working threshold B/ρ, working budget (ρ−1)·B/ρ, certified
/// λ = 1 − e^{−α} and, at τ = 1/2, γ = α·ρ/(ρ−1).
pub fn rho_core_sampler<'a>(
    sub: &SubInstance<'a>,
    alpha: f64,
    rho: f64,
    tau: f64,
) -> Result<LotterySampler<'a>, OracleError> {
    OracleParams::new(alpha, tau).validate()?;
    if !rho.is_finite() || rho <= 1.0 {
        return Err(OracleError::BadRho(rho));
    }
    let restricted = sub.with_cost_at_most(sub.budget / rho, (rho - 1.0) * sub.budget / rho);
    let certified_lambda = -f64::exp_m1(-alpha);
    sampler_from_restriction(
        restricted,
        alpha,
        tau,
        rho / (rho - 1.0),
        rho,
        certified_lambda,
        sub.budget,
    )
}

/// Draws from [`randomized_core_sampler`] until one realization covers
/// ⌈λ_target·n⌉ voters and returns it.
///
/// Every draw, kept or rejected, satisfies the certified per-realization γ
/// bound; the retry loop only chases coverage. On exhaustion the error
/// carries the best draw seen.
pub fn partial_core_oracle(
    sub: &SubInstance,
    params: &OracleParams,
    rng: &mut impl Rng,
) -> Result<PartialCoreSolution, OracleError> {
    params.validate()?;
    let sampler = randomized_core_sampler(sub, params.alpha, params.tau)?;
    sampler.draw_meeting(params.lambda_target, params.max_tries, rng).map(|(draw, _)| draw)
}

/// Like [`partial_core_oracle`] but certified only against alternatives of
/// cost at most B/ρ, in exchange for the stronger λ = 1 − e^{−α} and a
/// realized cost still within B: (ρ−1)·B/ρ + B/ρ = B.
pub fn rho_partial_core_oracle(
    sub: &SubInstance,
    params: &OracleParams,
    rng: &mut impl Rng,
) -> Result<PartialCoreSolution, OracleError> {
    params.validate()?;
    if params.rho <= 1.0 {
        return Err(OracleError::BadRho(params.rho));
    }
    let sampler = rho_core_sampler(sub, params.alpha, params.rho, params.tau)?;
    sampler.draw_meeting(params.lambda_target, params.max_tries, rng).map(|(draw, _)| draw)
}
