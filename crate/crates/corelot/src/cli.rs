//! Command-line surface binding the pipeline end to end: argument parsing,
//! dispatch into the library, and machine-readable JSON reports whose bytes
//! are stable for a fixed command, seed, and instance.
//!
//! Exit codes: 0 when the command and every requested check succeed, 2 for
//! configuration or input errors, 3 when a check fails (the JSON report
//! still describes the failure), 4 for internal solver errors.

use crate::apps::{generate, AppsError, GenSpec};
use crate::iterative::{
    iterated_rounding, iterated_rounding_v2_with, ratio_f, ratio_omega, v2_levels, IterationRun,
    IterativeError, PartialCoreOracle, RhoOracle, StandardOracle,
};
use crate::leo::{tatonnement, IncomeModel, LeoError};
use crate::lp::{build_lp, restrict_instance, solve_lp, LpError, DEFAULT_TOL};
use crate::model::{load_instance, CIdx, Instance, ModelError, SubInstance};
use crate::oracle::{randomized_core_sampler, rho_core_sampler, LotterySampler, OracleError};
use crate::rounding::trial_rng;
use crate::verify::{
    check_gamma_core, check_lp_solution, check_partial_core, estimate_coverage, CheckResult,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Apps(#[from] AppsError),
    #[error(transparent)]
    Leo(#[from] LeoError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Iterative(#[from] IterativeError),
}

fn lp_exit_code(err: &LpError) -> i32 {
    match err {
        LpError::BadAlpha(_)
        | LpError::BadBudget(_)
        | LpError::NoAffordableComparison { .. }
        | LpError::BotExcluded => 2,
        _ => 4,
    }
}

fn oracle_exit_code(err: &OracleError) -> i32 {
    match err {
        OracleError::BadAlpha(_)
        | OracleError::BadTau(_)
        | OracleError::BadLambdaTarget(_)
        | OracleError::BadRho(_)
        | OracleError::BadTries => 2,
        OracleError::Lp(inner) => lp_exit_code(inner),
        _ => 4,
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_)
            | CliError::Io(_)
            | CliError::Model(_)
            | CliError::Apps(_)
            | CliError::Leo(_) => 2,
            CliError::Lp(err) => lp_exit_code(err),
            CliError::Oracle(err) => oracle_exit_code(err),
            CliError::Iterative(err) => match err {
                IterativeError::BadOmega(_)
                | IterativeError::BadLambda(_)
                | IterativeError::CoverageContraction { .. }
                | IterativeError::GammaRhoImbalance { .. } => 2,
                IterativeError::RoundFailed { source, .. } => oracle_exit_code(source),
                IterativeError::RoundLimit { .. } => 4,
                IterativeError::Oracle(source) => oracle_exit_code(source),
            },
        }
    }
}

/// Fully resolved parameters, echoed verbatim into every report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    config: &'a RunConfig,
    results: Vec<Value>,
    checks: &'a [CheckResult],
    #[serde(skip_serializing_if = "Option::is_none")]
    timing_ms: Option<u64>,
}

#[derive(Parser)]
#[command(
    name = "corelot",
    version,
    about = "Approximate-core outcomes for budgeted social choice"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a deterministic approximate-core outcome by iterated rounding.
    Solve(SolveArgs),
    /// Sample lottery realizations and summarize per-voter coverage.
    Lottery(LotteryArgs),
    /// Check an outcome, a coverage level, or a solved relaxation.
    Verify(VerifyArgs),
    /// Build the feasibility program and dump or solve it.
    Lp(LpArgs),
    /// Run damped tatonnement and log equilibrium residuals.
    LeoIterate(LeoIterateArgs),
    /// Generate a synthetic instance.
    Gen(GenArgs),
    /// Batch solve runs over seeds and aggregate the results.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    V1,
    V2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// The computational preset: v1 with α=6.57, τ=0.495, ω=5.11.
    Thm63,
}

#[derive(Args)]
struct PipelineArgs {
    /// Restriction sharpness α.
    #[arg(long)]
    alpha: Option<f64>,
    /// Price cutoff τ (v1 oracles).
    #[arg(long)]
    tau: Option<f64>,
    /// Budget contraction ω between rounds.
    #[arg(long)]
    omega: Option<f64>,
    /// Cheap-slice divisor ρ (v2 oracles).
    #[arg(long)]
    rho: Option<f64>,
    /// Rounding variant.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Named parameter preset; explicit flags still win.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Debug, Clone, Copy)]
struct Pipeline {
    alpha: f64,
    tau: f64,
    omega: f64,
    rho: f64,
    variant: VariantArg,
}

impl PipelineArgs {
    fn resolve(&self) -> Pipeline {
        let (alpha, tau, omega, variant) = match self.preset {
            Some(Preset::Thm63) => (6.57, 0.495, 5.11, VariantArg::V1),
            None => (2.88, 0.5, 4.6, VariantArg::V2),
        };
        Pipeline {
            alpha: self.alpha.unwrap_or(alpha),
            tau: self.tau.unwrap_or(tau),
            omega: self.omega.unwrap_or(omega),
            rho: self.rho.unwrap_or(4.88),
            variant: self.variant.unwrap_or(variant),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Per-round redraw coverage target override.
    #[arg(long)]
    lambda_target: Option<f64>,
    /// Draws allowed per round before giving up.
    #[arg(long)]
    max_tries: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    timings: bool,
    instance: PathBuf,
}

#[derive(Args)]
struct LotteryArgs {
    #[arg(long, default_value_t = 2.88)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Sample from the cheap slice at this divisor instead of the full
    /// restriction.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write realizations as NDJSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
    instance: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CheckKind {
    Core,
    Partial,
    Coverage,
    Lp,
}

#[derive(Args)]
struct VerifyArgs {
    /// Which guarantee to check.
    #[arg(long, value_enum, default_value = "core")]
    check: CheckKind,
    /// Core exponent γ to test the outcome against.
    #[arg(long)]
    gamma: Option<f64>,
    /// Outcome to check, as JSON: {"atoms": ["a", "b"]}.
    #[arg(long)]
    outcome: Option<String>,
    /// Represented voter indices for the partial check, comma separated.
    #[arg(long, value_delimiter = ',')]
    voters: Vec<usize>,
    /// Cost-threshold divisor for the partial check.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Floor the deviator bounds to whole voters.
    #[arg(long)]
    floor: bool,
    /// Restriction sharpness α for coverage and lp checks.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Constraint tolerance for the lp check.
    #[arg(long, default_value_t = 1e-7)]
    tolerance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
    instance: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LpAction {
    /// Print the program in LP text format.
    Dump,
    /// Solve and report the allocation, prices, and an independent recheck.
    Solve,
}

#[derive(Args)]
struct LpArgs {
    #[arg(value_enum)]
    action: LpAction,
    #[arg(long, default_value_t = 2.88)]
    alpha: f64,
    /// Apply the budget-scaled restriction before building.
    #[arg(long)]
    restrict: bool,
    /// Constraint tolerance for the solution recheck.
    #[arg(long, default_value_t = 1e-7)]
    tolerance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
    instance: PathBuf,
}

#[derive(Args)]
struct LeoIterateArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Price-update steps to run.
    #[arg(long, default_value_t = 200)]
    steps: usize,
    /// Damping factor in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
    instance: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenKind {
    Pb,
    Clustering,
    #[value(name = "multilabel")]
    MultiLabel,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    /// Voters (pb).
    #[arg(long, default_value_t = 20)]
    voters: usize,
    /// Projects (pb).
    #[arg(long, default_value_t = 10)]
    projects: usize,
    /// Cost ceiling per project (pb).
    #[arg(long, default_value_t = 10)]
    max_cost: u32,
    /// Spending budget (pb); defaults to a quarter of the cost ceiling
    /// times the project count.
    #[arg(long)]
    budget: Option<f64>,
    /// Points (clustering).
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Candidate centers (clustering).
    #[arg(long, default_value_t = 10)]
    centers: usize,
    /// Committee size or label budget.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Coordinate dimension (clustering).
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Items (multilabel).
    #[arg(long, default_value_t = 50)]
    items: usize,
    /// Label universe size (multilabel).
    #[arg(long, default_value_t = 6)]
    labels: usize,
    /// Labels per item cap (multilabel).
    #[arg(long, default_value_t = 2)]
    cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the instance here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Number of seeds to run, 0 through seeds-1.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
    instance: PathBuf,
}

/// Parses `argv` and runs the selected command, returning the process exit
/// code. Errors print to stderr; reports print to stdout.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    };
    let _ = std::io::stdout().flush();
    code
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Solve(args) => cmd_solve(args),
        Command::Lottery(args) => cmd_lottery(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Lp(args) => cmd_lp(args),
        Command::LeoIterate(args) => cmd_leo_iterate(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn read_instance(path: &Path) -> Result<Instance, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(load_instance(&text)?)
}

fn full_comparison(instance: &Instance) -> Vec<CIdx> {
    (0..instance.comparison_set().len()).collect()
}

fn emit_report(report: &Report, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    if let Some(path) = out {
        fs::write(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn elapsed_ms(timer: Option<Instant>) -> Option<u64> {
    timer.map(|t| t.elapsed().as_millis() as u64)
}

/// Applies `f` to each index in `0..count`, splitting the range across
/// threads. Output order matches index order, so results are independent
/// of the worker count.
fn parallel_map<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(8)
        .min(count.max(1) as usize);
    if workers <= 1 {
        return (0..count).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    let chunk = (slots.len() + workers - 1) / workers;
    std::thread::scope(|scope| {
        for (w, slice) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (i, slot) in slice.iter_mut().enumerate() {
                    *slot = Some(f((w * chunk + i) as u64));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("worker filled slot")).collect()
}

struct PipelineOutput {
    run: IterationRun,
    ratio: f64,
    lambda: f64,
    round_gamma: f64,
}

fn run_pipeline(
    instance: &Instance,
    params: Pipeline,
    lambda_target: Option<f64>,
    max_tries: Option<usize>,
    seed: u64,
) -> Result<PipelineOutput, IterativeError> {
    let mut rng = trial_rng(seed, 0);
    match params.variant {
        VariantArg::V1 => {
            let mut oracle = StandardOracle::new(params.alpha, params.tau);
            if let Some(target) = lambda_target {
                oracle.params.lambda_target = target;
            }
            if let Some(tries) = max_tries {
                oracle.params.max_tries = tries;
            }
            let run = iterated_rounding(instance, &oracle, params.omega, &mut rng)?;
            let lambda = oracle.certified_lambda();
            let round_gamma = oracle.certified_gamma();
            let ratio = ratio_omega(lambda, round_gamma, params.omega)?;
            Ok(PipelineOutput { run, ratio, lambda, round_gamma })
        }
        VariantArg::V2 => {
            let mut oracle = RhoOracle::new(params.alpha, params.rho);
            if let Some(target) = lambda_target {
                oracle.params.lambda_target = target;
            }
            if let Some(tries) = max_tries {
                oracle.params.max_tries = tries;
            }
            let run = iterated_rounding_v2_with(instance, &oracle, params.omega, &mut rng)?;
            let (lambda, round_gamma) = v2_levels(params.alpha, params.rho);
            let ratio = ratio_f(lambda, round_gamma, params.omega)?;
            Ok(PipelineOutput { run, ratio, lambda, round_gamma })
        }
    }
}

fn trace_json(instance: &Instance, run: &IterationRun) -> Vec<Value> {
    run.schedule
        .rounds
        .iter()
        .map(|r| {
            json!({
                "round": r.round,
                "budget": r.budget,
                "voters": r.voters.len(),
                "tries": r.tries,
                "outcome": instance.atom_ids(&r.outcome),
                "covered": r.covered.len(),
                "realized_cost": r.realized_cost,
            })
        })
        .collect()
}

fn cmd_solve(args: SolveArgs) -> Result<i32, CliError> {
    let timer = args.timings.then(Instant::now);
    let params = args.pipeline.resolve();
    let instance = read_instance(&args.instance)?;
    let output = run_pipeline(&instance, params, args.lambda_target, args.max_tries, args.seed)?;
    let core =
        check_gamma_core(&instance, &output.run.outcome, output.ratio, &full_comparison(&instance));
    let config = RunConfig {
        command: "solve".into(),
        instance: Some(args.instance.display().to_string()),
        alpha: Some(params.alpha),
        tau: (params.variant == VariantArg::V1).then_some(params.tau),
        omega: Some(params.omega),
        rho: (params.variant == VariantArg::V2).then_some(params.rho),
        lambda_target: args.lambda_target,
        seed: Some(args.seed),
        variant: Some(
            match params.variant {
                VariantArg::V1 => "v1",
                VariantArg::V2 => "v2",
            }
            .into(),
        ),
        output: args.out.as_ref().map(|p| p.display().to_string()),
        ..RunConfig::default()
    };
    let results = vec![json!({
        "outcome": instance.atom_ids(&output.run.outcome),
        "cost": instance.cost(&output.run.outcome),
        "budget": instance.budget(),
        "certified_ratio": output.ratio,
        "round_lambda": output.lambda,
        "round_gamma": output.round_gamma,
        "rounds": output.run.schedule.rounds.len(),
        "worst_gamma_needed": core.worst_gamma_needed,
        "trace": trace_json(&instance, &output.run),
    })];
    let report = Report {
        command: "solve",
        config: &config,
        results,
        checks: &core.checks,
        timing_ms: elapsed_ms(timer),
    };
    emit_report(&report, args.out.as_deref())?;
    Ok(if core.all_pass() { 0 } else { 3 })
}

fn build_sampler<'a>(
    sub: &SubInstance<'a>,
    alpha: f64,
    tau: f64,
    rho: Option<f64>,
) -> Result<LotterySampler<'a>, OracleError> {
    match rho {
        Some(rho) => rho_core_sampler(sub, alpha, rho, tau),
        None => randomized_core_sampler(sub, alpha, tau),
    }
}

fn coverage_results(instance: &Instance, estimate: &crate::verify::CoverageEstimate) -> Value {
    json!({
        "trials": estimate.trials,
        "certified_lambda": estimate.lambda,
        "voters": estimate
            .voters
            .iter()
            .map(|v| {
                json!({
                    "voter": instance.voter_id(v.voter),
                    "frequency": v.frequency,
                    "lower99": v.lower99,
                    "upper99": v.upper99,
                    "flagged": v.flagged,
                })
            })
            .collect::<Vec<_>>(),
    })
}

fn coverage_check(estimate: &crate::verify::CoverageEstimate) -> CheckResult {
    let min_frequency = estimate.voters.iter().map(|v| v.frequency).fold(f64::INFINITY, f64::min);
    let flagged = estimate.flagged();
    let mut check = if flagged.is_empty() {
        CheckResult::passed("coverage")
    } else {
        CheckResult::failed(
            "coverage",
            format!("voters {flagged:?} sit below the certified level with 99% confidence"),
        )
    };
    check.trials = Some(estimate.trials);
    check.empirical = (min_frequency.is_finite()).then_some(min_frequency);
    check.bound = Some(estimate.lambda);
    check
}

fn cmd_lottery(args: LotteryArgs) -> Result<i32, CliError> {
    let timer = args.timings.then(Instant::now);
    if args.trials < 100 {
        return Err(CliError::Config(
            "lottery needs at least 100 trials for the coverage summary".into(),
        ));
    }
    let instance = read_instance(&args.instance)?;
    let sub = SubInstance::full(&instance);
    let sampler = build_sampler(&sub, args.alpha, args.tau, args.rho)?;
    let drawn: Result<Vec<(String, f64)>, OracleError> =
        parallel_map(args.trials, |t| -> Result<(String, f64), OracleError> {
            let draw = sampler.draw(&mut trial_rng(args.seed, t))?;
            let line = serde_json::to_string(&json!({
                "trial": t,
                "outcome": instance.atom_ids(&draw.outcome),
                "cost": draw.realized_cost,
                "covered": draw.covered,
            }))
            .expect("realization serializes");
            Ok((line, draw.realized_cost))
        })
        .into_iter()
        .collect();
    let drawn = drawn?;
    let max_cost = drawn.iter().map(|(_, cost)| *cost).fold(0.0, f64::max);
    let lines: Vec<String> = drawn.into_iter().map(|(line, _)| line).collect();
    match &args.out {
        Some(path) => {
            let mut body = lines.join("\n");
            body.push('\n');
            fs::write(path, body)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut handle = stdout.lock();
            for line in &lines {
                writeln!(handle, "{line}")?;
            }
        }
    }
    let estimate = estimate_coverage(&sampler, args.trials, args.seed);
    let mut checks = vec![coverage_check(&estimate)];
    let mut cost_check = if max_cost <= instance.budget() + 1e-9 {
        CheckResult::passed("budget")
    } else {
        CheckResult::failed(
            "budget",
            format!("a realization cost {max_cost} with budget {}", instance.budget()),
        )
    };
    cost_check.empirical = Some(max_cost);
    cost_check.bound = Some(instance.budget());
    checks.push(cost_check);
    let config = RunConfig {
        command: "lottery".into(),
        instance: Some(args.instance.display().to_string()),
        alpha: Some(args.alpha),
        tau: Some(args.tau),
        rho: args.rho,
        seed: Some(args.seed),
        trials: Some(args.trials),
        output: args.out.as_ref().map(|p| p.display().to_string()),
        ..RunConfig::default()
    };
    let results = vec![
        coverage_results(&instance, &estimate),
        json!({
            "certified_gamma": sampler.certified_gamma(),
            "certified_rho": sampler.certified_rho(),
            "max_realized_cost": max_cost,
            "degenerate": sampler.is_degenerate(),
        }),
    ];
    let all_pass = checks.iter().all(|c| c.pass);
    let report = Report {
        command: "lottery",
        config: &config,
        results,
        checks: &checks,
        timing_ms: elapsed_ms(timer),
    };
    emit_report(&report, None)?;
    Ok(if all_pass { 0 } else { 3 })
}

#[derive(Deserialize)]
struct OutcomeArg {
    atoms: Vec<String>,
}

fn parse_outcome(instance: &Instance, text: &str) -> Result<crate::model::Outcome, CliError> {
    let arg: OutcomeArg = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("bad --outcome JSON: {e}")))?;
    Ok(instance.outcome_from_ids(&arg.atoms)?)
}

fn cmd_verify(args: VerifyArgs) -> Result<i32, CliError> {
    let timer = args.timings.then(Instant::now);
    let instance = read_instance(&args.instance)?;
    let c = full_comparison(&instance);
    let mut config = RunConfig {
        command: "verify".into(),
        instance: Some(args.instance.display().to_string()),
        output: args.out.as_ref().map(|p| p.display().to_string()),
        ..RunConfig::default()
    };
    let (results, checks): (Vec<Value>, Vec<CheckResult>) = match args.check {
        CheckKind::Core | CheckKind::Partial => {
            let gamma = args
                .gamma
                .ok_or_else(|| CliError::Config("core and partial checks need --gamma".into()))?;
            let outcome_text = args
                .outcome
                .as_deref()
                .ok_or_else(|| CliError::Config("core and partial checks need --outcome".into()))?;
            let outcome = parse_outcome(&instance, outcome_text)?;
            config.gamma = Some(gamma);
            let report = if args.check == CheckKind::Core {
                check_gamma_core(&instance, &outcome, gamma, &c)
            } else {
                config.rho = Some(args.rho);
                for &v in &args.voters {
                    if v >= instance.n() {
                        return Err(CliError::Config(format!(
                            "voter index {v} out of range for {} voters",
                            instance.n()
                        )));
                    }
                }
                let mut voters = args.voters.clone();
                voters.sort_unstable();
                voters.dedup();
                check_partial_core(&instance, &outcome, &voters, gamma, &c, args.rho, args.floor)
            };
            let results = vec![json!({
                "outcome": instance.atom_ids(&outcome),
                "cost": instance.cost(&outcome),
                "worst_gamma_needed": report.worst_gamma_needed,
            })];
            (results, report.checks)
        }
        CheckKind::Coverage => {
            let alpha = args
                .alpha
                .ok_or_else(|| CliError::Config("the coverage check needs --alpha".into()))?;
            if args.trials < 100 {
                return Err(CliError::Config(
                    "the coverage check needs at least 100 trials".into(),
                ));
            }
            config.alpha = Some(alpha);
            config.tau = Some(args.tau);
            config.seed = Some(args.seed);
            config.trials = Some(args.trials);
            let rho = (args.rho > 1.0).then_some(args.rho);
            config.rho = rho;
            let sub = SubInstance::full(&instance);
            let sampler = build_sampler(&sub, alpha, args.tau, rho)?;
            let estimate = estimate_coverage(&sampler, args.trials, args.seed);
            (vec![coverage_results(&instance, &estimate)], vec![coverage_check(&estimate)])
        }
        CheckKind::Lp => {
            let alpha =
                args.alpha.ok_or_else(|| CliError::Config("the lp check needs --alpha".into()))?;
            config.alpha = Some(alpha);
            config.tolerance = Some(args.tolerance);
            let sub = SubInstance::full(&instance);
            let model = build_lp(&sub, alpha)?;
            let solution = solve_lp(&model, DEFAULT_TOL)?;
            let report = check_lp_solution(&sub, &solution.y, &solution.p, alpha, args.tolerance);
            let results = vec![json!({
                "objective": solution.objective,
                "iterations": solution.iterations,
                "max_violation": solution.max_violation,
            })];
            (results, report.checks)
        }
    };
    let all_pass = checks.iter().all(|c| c.pass);
    let report = Report {
        command: "verify",
        config: &config,
        results,
        checks: &checks,
        timing_ms: elapsed_ms(timer),
    };
    emit_report(&report, args.out.as_deref())?;
    Ok(if all_pass { 0 } else { 3 })
}

fn cmd_lp(args: LpArgs) -> Result<i32, CliError> {
    let timer = args.timings.then(Instant::now);
    let instance = read_instance(&args.instance)?;
    let full = SubInstance::full(&instance);
    let sub = if args.restrict { restrict_instance(&full, args.alpha)? } else { full };
    let model = build_lp(&sub, args.alpha)?;
    match args.action {
        LpAction::Dump => {
            let text = model.to_lp_text();
            if let Some(path) = &args.out {
                fs::write(path, &text)?;
            } else {
                print!("{text}");
            }
            Ok(0)
        }
        LpAction::Solve => {
            let solution = solve_lp(&model, DEFAULT_TOL)?;
            let report =
                check_lp_solution(&sub, &solution.y, &solution.p, args.alpha, args.tolerance);
            let config = RunConfig {
                command: "lp".into(),
                instance: Some(args.instance.display().to_string()),
                alpha: Some(args.alpha),
                tolerance: Some(args.tolerance),
                output: args.out.as_ref().map(|p| p.display().to_string()),
                ..RunConfig::default()
            };
            let support: Vec<Value> = sub
                .c
                .iter()
                .enumerate()
                .filter(|&(pos, _)| solution.y[pos] > 0.0)
                .map(|(pos, &j)| {
                    json!({
                        "outcome": instance.atom_ids(&instance.comparison_set()[j]),
                        "mass": solution.y[pos],
                    })
                })
                .collect();
            let results = vec![json!({
                "objective": solution.objective,
                "iterations": solution.iterations,
                "max_violation": solution.max_violation,
                "restricted": args.restrict,
                "budget": sub.budget,
                "support": support,
                "y": solution.y,
                "prices": solution.p,
            })];
            let out_report = Report {
                command: "lp",
                config: &config,
                results,
                checks: &report.checks,
                timing_ms: elapsed_ms(timer),
            };
            emit_report(&out_report, args.out.as_deref())?;
            Ok(if report.all_pass() { 0 } else { 3 })
        }
    }
}

fn cmd_leo_iterate(args: LeoIterateArgs) -> Result<i32, CliError> {
    let timer = args.timings.then(Instant::now);
    let instance = read_instance(&args.instance)?;
    let sub = SubInstance::full(&instance);
    let income = IncomeModel::uniform01();
    let (_state, residuals) = tatonnement(&sub, &income, args.alpha, args.steps, args.damping)?;
    let config = RunConfig {
        command: "leo-iterate".into(),
        instance: Some(args.instance.display().to_string()),
        alpha: Some(args.alpha),
        trials: Some(args.steps as u64),
        output: args.out.as_ref().map(|p| p.display().to_string()),
        ..RunConfig::default()
    };
    let trajectory: Vec<Value> = residuals
        .iter()
        .enumerate()
        .map(|(step, r)| json!({"step": step, "r1": r.r1, "r2": r.r2, "r3": r.r3}))
        .collect();
    let last = residuals.last();
    let results = vec![json!({
        "steps": residuals.len(),
        "final": last.map(|r| json!({"r1": r.r1, "r2": r.r2, "r3": r.r3})),
        "trajectory": trajectory,
    })];
    let report = Report {
        command: "leo-iterate",
        config: &config,
        results,
        checks: &[],
        timing_ms: elapsed_ms(timer),
    };
    emit_report(&report, args.out.as_deref())?;
    Ok(0)
}

fn cmd_gen(args: GenArgs) -> Result<i32, CliError> {
    let spec = match args.kind {
        GenKind::Pb => GenSpec::Pb {
            voters: args.voters,
            projects: args.projects,
            max_cost: args.max_cost,
            budget: args.budget.unwrap_or_else(|| {
                ((args.projects as f64) * f64::from(args.max_cost) / 4.0).max(1.0)
            }),
        },
        GenKind::Clustering => GenSpec::Clustering {
            points: args.points,
            centers: args.centers,
            k: args.k,
            dim: args.dim,
        },
        GenKind::MultiLabel => {
            GenSpec::MultiLabel { items: args.items, labels: args.labels, cap: args.cap, k: args.k }
        }
    };
    let instance = generate(&spec, args.seed)?;
    let mut text = instance.to_json_string();
    text.push('\n');
    if let Some(path) = &args.out {
        fs::write(path, &text)?;
    } else {
        print!("{text}");
    }
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> Result<i32, CliError> {
    let timer = args.timings.then(Instant::now);
    let params = args.pipeline.resolve();
    let instance = read_instance(&args.instance)?;
    let c = full_comparison(&instance);
    let runs: Vec<Result<Value, IterativeError>> = parallel_map(args.seeds, |seed| {
        let started = args.timings.then(Instant::now);
        let output = run_pipeline(&instance, params, None, None, seed)?;
        let core = check_gamma_core(&instance, &output.run.outcome, output.ratio, &c);
        let mut row = json!({
            "seed": seed,
            "pass": core.all_pass(),
            "outcome": instance.atom_ids(&output.run.outcome),
            "cost": instance.cost(&output.run.outcome),
            "rounds": output.run.schedule.rounds.len(),
            "worst_gamma_needed": core.worst_gamma_needed,
            "certified_ratio": output.ratio,
        });
        if let Some(ms) = elapsed_ms(started) {
            row["ms"] = json!(ms);
        }
        Ok(row)
    });
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        rows.push(run?);
    }
    let passes = rows.iter().filter(|r| r["pass"] == json!(true)).count();
    let gammas: Vec<f64> = rows.iter().filter_map(|r| r["worst_gamma_needed"].as_f64()).collect();
    let aggregate = json!({
        "runs": rows.len(),
        "passes": passes,
        "min_worst_gamma": gammas.iter().copied().fold(f64::INFINITY, f64::min),
        "max_worst_gamma": gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "mean_worst_gamma": if gammas.is_empty() {
            Value::Null
        } else {
            json!(gammas.iter().sum::<f64>() / gammas.len() as f64)
        },
        "mean_rounds": if rows.is_empty() {
            Value::Null
        } else {
            json!(
                rows.iter().filter_map(|r| r["rounds"].as_u64()).sum::<u64>() as f64
                    / rows.len() as f64
            )
        },
    });
    let mut check = if passes == rows.len() {
        CheckResult::passed("bench-core")
    } else {
        CheckResult::failed(
            "bench-core",
            format!("{} of {} runs failed the core check", rows.len() - passes, rows.len()),
        )
    };
    check.trials = Some(args.seeds);
    check.empirical = Some(passes as f64 / rows.len().max(1) as f64);
    check.bound = Some(1.0);
    let checks = vec![check];
    let config = RunConfig {
        command: "bench".into(),
        instance: Some(args.instance.display().to_string()),
        alpha: Some(params.alpha),
        tau: (params.variant == VariantArg::V1).then_some(params.tau),
        omega: Some(params.omega),
        rho: (params.variant == VariantArg::V2).then_some(params.rho),
        trials: Some(args.seeds),
        variant: Some(
            match params.variant {
                VariantArg::V1 => "v1",
                VariantArg::V2 => "v2",
            }
            .into(),
        ),
        output: args.out.as_ref().map(|p| p.display().to_string()),
        ..RunConfig::default()
    };
    let results = vec![aggregate, json!({ "runs": rows })];
    let all_pass = checks.iter().all(|ch| ch.pass);
    let report = Report {
        command: "bench",
        config: &config,
        results,
        checks: &checks,
        timing_ms: elapsed_ms(timer),
    };
    emit_report(&report, args.out.as_deref())?;
    Ok(if all_pass { 0 } else { 3 })
}
