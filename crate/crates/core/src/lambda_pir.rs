//! λ-policy iteration with randomization.
//!
//! Each iteration takes the greedy policy `μ_k` with `F_{μ_k} V_k = F V_k`,
//! then a single Bernoulli(`p_k`) draw chooses between the one-step update
//! `F_{μ_k} V_k` and the multistep update `F_{μ_k}^λ V_k`.
//!
//! Randomness comes from ChaCha8 (`rand_chacha` 0.3) seeded with
//! `seed_from_u64(seed)`, one `f64` draw per iteration. Changing the generator
//! or the draw order changes every trace.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman_ops::{
    apply_lambda_operator, apply_optimality_operator, gamma_bound_constant, policy_apply_into,
    LambdaOperatorConfig,
};
use crate::dp_model::{DpModel, Policy};
use crate::error::{DpError, Result};
use crate::value_space::{leq_with_slack, strict_order_failures, weighted_distance, ValueFunction};

pub type PirRng = ChaCha8Rng;

pub fn pir_rng(seed: u64) -> PirRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Probability `p_k` of taking the one-step branch at iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PSchedule {
    Constant {
        p: f64,
    },
    /// `p_k = max(p0 β^k, p_min)`.
    Geometric {
        p0: f64,
        beta: f64,
        p_min: f64,
    },
}

impl PSchedule {
    pub fn validate(&self) -> Result<()> {
        let open = |p: f64| p > 0.0 && p < 1.0;
        match *self {
            PSchedule::Constant { p } if open(p) => Ok(()),
            PSchedule::Constant { p } => {
                Err(DpError::Domain(format!("p must lie in (0, 1), got {p}")))
            }
            PSchedule::Geometric { p0, beta, p_min } => {
                if !open(p0) || !(beta > 0.0 && beta <= 1.0) || !(p_min > 0.0 && p_min <= p0) {
                    Err(DpError::Domain(format!(
                        "geometric schedule needs p0 in (0,1), beta in (0,1], p_min in (0, p0]; got p0={p0} beta={beta} p_min={p_min}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn at(&self, k: usize) -> f64 {
        match *self {
            PSchedule::Constant { p } => p,
            PSchedule::Geometric { p0, beta, p_min } => (p0 * beta.powf(k as f64)).max(p_min),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PirConfig {
    pub lambda: LambdaOperatorConfig,
    pub schedule: PSchedule,
    /// Stop once `‖F V_k − V_k‖ ≤ stop_tol`.
    pub stop_tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Contraction modulus used for the `γ(σ) · residual` certificates.
    pub sigma: f64,
    /// Require `F V_0 < V_0` pointwise before iterating.
    pub enforce_initial_condition: bool,
    /// Slack on the lower sandwich `V* − oracle_tol ν ≤ V_k`.
    pub oracle_tol: f64,
    /// Record wall-clock time per iteration. Off by default so traces are reproducible.
    pub record_timing: bool,
}

impl Default for PirConfig {
    fn default() -> Self {
        Self {
            lambda: LambdaOperatorConfig::default(),
            schedule: PSchedule::Constant { p: 0.5 },
            stop_tol: 1e-8,
            max_iterations: 10_000,
            seed: 0,
            sigma: 0.9,
            enforce_initial_condition: true,
            oracle_tol: 1e-9,
            record_timing: false,
        }
    }
}

impl PirConfig {
    pub fn validate(&self) -> Result<()> {
        self.lambda.validate()?;
        self.schedule.validate()?;
        gamma_bound_constant(self.sigma)?;
        if !(self.stop_tol > 0.0) {
            return Err(DpError::Domain(format!(
                "stop_tol must be positive, got {}",
                self.stop_tol
            )));
        }
        if self.max_iterations == 0 {
            return Err(DpError::Domain("max_iterations must be at least 1".into()));
        }
        if !(self.oracle_tol >= 0.0) {
            return Err(DpError::Domain(format!(
                "oracle_tol must be nonnegative, got {}",
                self.oracle_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    PolicyStep,
    LambdaStep,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::PolicyStep => "policy_step",
            Branch::LambdaStep => "lambda_step",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub v_next: ValueFunction,
    pub policy: Policy,
    pub branch: Branch,
    pub p_k: f64,
    pub draw: f64,
    pub lambda_terms: usize,
    pub truncation_warning: bool,
}

/// One iteration from `v_k`; advances `rng` by exactly one draw.
pub fn pir_step<M: DpModel + ?Sized>(
    model: &M,
    v_k: &ValueFunction,
    k: usize,
    cfg: &PirConfig,
    rng: &mut PirRng,
) -> Result<StepOutcome> {
    cfg.validate()?;
    let (_, mu) = apply_optimality_operator(model, v_k)?;
    step_with_policy(model, v_k, mu, k, cfg, rng)
}

fn step_with_policy<M: DpModel + ?Sized>(
    model: &M,
    v_k: &ValueFunction,
    mu: Policy,
    k: usize,
    cfg: &PirConfig,
    rng: &mut PirRng,
) -> Result<StepOutcome> {
    let p_k = cfg.schedule.at(k);
    let draw: f64 = rng.gen();
    if draw < p_k {
        let slots = mu.slots(model.controls())?;
        let mut out = vec![0.0; v_k.len()];
        policy_apply_into(model, &slots, v_k.as_slice(), &mut out);
        Ok(StepOutcome {
            v_next: ValueFunction::new(out)?,
            policy: mu,
            branch: Branch::PolicyStep,
            p_k,
            draw,
            lambda_terms: 0,
            truncation_warning: false,
        })
    } else {
        let applied = apply_lambda_operator(model, &mu, v_k, &cfg.lambda)?;
        Ok(StepOutcome {
            v_next: applied.value,
            policy: mu,
            branch: Branch::LambdaStep,
            p_k,
            draw,
            lambda_terms: applied.terms,
            truncation_warning: applied.truncation_warning,
        })
    }
}

/// Iteration `k`: the state `V_k`, its diagnostics, and the branch that produced `V_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PirRecord {
    pub k: usize,
    pub branch: Branch,
    pub policy: Policy,
    /// `‖F V_k − V_k‖`
    pub residual: f64,
    /// `γ(σ) · residual`, a bound on `‖V* − V_k‖`.
    pub certified_bound: f64,
    pub p_k: f64,
    pub draw: f64,
    pub lambda_terms: usize,
    /// `V_{k+1} ≤ V_k + truncation_tol · ν`.
    pub monotone_decrease: bool,
    /// `V* − oracle_tol ν ≤ V_k ≤ F^k V_0 + k · truncation_tol · ν`, when an oracle is supplied.
    pub sandwich_ok: Option<bool>,
    pub wall_time_ns: u64,
    pub values: ValueFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PirTrace {
    pub records: Vec<PirRecord>,
    pub converged: bool,
    /// Steps taken; equals `records.len()`.
    pub iterations: usize,
    pub final_residual: f64,
    pub final_certified_bound: f64,
    pub final_sandwich_ok: Option<bool>,
    pub truncation_warnings: usize,
    pub final_values: ValueFunction,
}

impl PirTrace {
    /// Every sandwich check passed (vacuously true without an oracle).
    pub fn sandwich_holds(&self) -> bool {
        self.records.iter().all(|r| r.sandwich_ok != Some(false))
            && self.final_sandwich_ok != Some(false)
    }

    pub fn residuals(&self) -> impl Iterator<Item = f64> + '_ {
        self.records
            .iter()
            .map(|r| r.residual)
            .chain(std::iter::once(self.final_residual))
    }
}

struct Sandwich<'a> {
    v_star: &'a ValueFunction,
    /// `F^k V_0`
    upper: ValueFunction,
}

/// Runs λ-PIR from `v0` until the optimality residual drops below `stop_tol`.
///
/// Nonconvergence is reported through `trace.converged`, not as an error.
/// When `oracle` carries `V*`, every iterate is checked against the envelope
/// `V* ≤ V_k ≤ F^k V_0`.
pub fn run_pir<M: DpModel + ?Sized>(
    model: &M,
    v0: &ValueFunction,
    cfg: &PirConfig,
    oracle: Option<&ValueFunction>,
) -> Result<(ValueFunction, PirTrace)> {
    cfg.validate()?;
    if let Some(v_star) = oracle {
        crate::value_space::check_len(model.n_states(), v_star.len())?;
    }
    let nu = model.weights();
    let gamma = gamma_bound_constant(cfg.sigma)?;
    let trunc = cfg.lambda.truncation_tol;

    let (mut fv, mut mu) = apply_optimality_operator(model, v0)?;
    if cfg.enforce_initial_condition {
        let failing = strict_order_failures(&fv, v0)?;
        if !failing.is_empty() {
            return Err(DpError::Precondition { states: failing });
        }
    }

    let mut sandwich = oracle.map(|v_star| Sandwich {
        v_star,
        upper: v0.clone(),
    });
    let check_sandwich = |s: &Sandwich<'_>, v: &ValueFunction, k: usize| -> Result<bool> {
        Ok(leq_with_slack(s.v_star, v, cfg.oracle_tol, nu)?
            && leq_with_slack(v, &s.upper, k as f64 * trunc, nu)?)
    };

    let mut rng = pir_rng(cfg.seed);
    let mut v = v0.clone();
    let mut records = Vec::new();
    let mut truncation_warnings = 0;
    for k in 0..cfg.max_iterations {
        let residual = weighted_distance(&fv, &v, nu)?;
        let sandwich_ok = sandwich
            .as_ref()
            .map(|s| check_sandwich(s, &v, k))
            .transpose()?;
        if residual <= cfg.stop_tol {
            return Ok(finish(
                v,
                records,
                true,
                residual,
                gamma,
                sandwich_ok,
                truncation_warnings,
            ));
        }

        let started = cfg.record_timing.then(Instant::now);
        let step = step_with_policy(model, &v, mu, k, cfg, &mut rng)?;
        let wall_time_ns = started.map_or(0, |t| t.elapsed().as_nanos() as u64);
        truncation_warnings += usize::from(step.truncation_warning);
        let monotone_decrease = leq_with_slack(&step.v_next, &v, trunc, nu)?;

        records.push(PirRecord {
            k,
            branch: step.branch,
            policy: step.policy,
            residual,
            certified_bound: gamma * residual,
            p_k: step.p_k,
            draw: step.draw,
            lambda_terms: step.lambda_terms,
            monotone_decrease,
            sandwich_ok,
            wall_time_ns,
            values: v,
        });

        if let Some(s) = sandwich.as_mut() {
            s.upper = apply_optimality_operator(model, &s.upper)?.0;
        }
        v = step.v_next;
        (fv, mu) = apply_optimality_operator(model, &v)?;
    }
    let k = cfg.max_iterations;
    let residual = weighted_distance(&fv, &v, nu)?;
    let sandwich_ok = sandwich
        .as_ref()
        .map(|s| check_sandwich(s, &v, k))
        .transpose()?;
    let converged = residual <= cfg.stop_tol;
    Ok(finish(
        v,
        records,
        converged,
        residual,
        gamma,
        sandwich_ok,
        truncation_warnings,
    ))
}

fn finish(
    v: ValueFunction,
    records: Vec<PirRecord>,
    converged: bool,
    residual: f64,
    gamma: f64,
    sandwich_ok: Option<bool>,
    truncation_warnings: usize,
) -> (ValueFunction, PirTrace) {
    let trace = PirTrace {
        iterations: records.len(),
        records,
        converged,
        final_residual: residual,
        final_certified_bound: gamma * residual,
        final_sandwich_ok: sandwich_ok,
        truncation_warnings,
        final_values: v.clone(),
    };
    (v, trace)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub message: String,
}

/// Aggregate over independent runs; `merge` is associative and commutative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunBatchSummary {
    pub seeds_run: usize,
    pub converged: usize,
    /// Max iterations over converged runs.
    pub max_iterations: usize,
    /// Max `‖V_final − V*‖` over converged runs, when an oracle was supplied.
    pub max_final_error: Option<f64>,
    /// Runs whose trace violated the sandwich envelope.
    pub sandwich_violations: usize,
    /// Seeds that did not converge within the iteration budget.
    pub nonconverged_seeds: Vec<u64>,
    pub failures: Vec<SeedFailure>,
}

impl RunBatchSummary {
    pub fn empty() -> Self {
        Self {
            seeds_run: 0,
            converged: 0,
            max_iterations: 0,
            max_final_error: None,
            sandwich_violations: 0,
            nonconverged_seeds: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn from_run(
        seed: u64,
        outcome: &Result<(ValueFunction, PirTrace)>,
        oracle: Option<&ValueFunction>,
        nu: &crate::value_space::WeightFunction,
    ) -> Self {
        let mut s = Self::empty();
        s.seeds_run = 1;
        match outcome {
            Err(e) => s.failures.push(SeedFailure {
                seed,
                message: e.to_string(),
            }),
            Ok((v, trace)) => {
                if !trace.sandwich_holds() {
                    s.sandwich_violations = 1;
                }
                if trace.converged {
                    s.converged = 1;
                    s.max_iterations = trace.iterations;
                    s.max_final_error = oracle
                        .map(|v_star| weighted_distance(v, v_star, nu).unwrap_or(f64::INFINITY));
                } else {
                    s.nonconverged_seeds.push(seed);
                }
            }
        }
        s
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.seeds_run += other.seeds_run;
        self.converged += other.converged;
        self.max_iterations = self.max_iterations.max(other.max_iterations);
        self.max_final_error = match (self.max_final_error, other.max_final_error) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.sandwich_violations += other.sandwich_violations;
        self.nonconverged_seeds.extend(other.nonconverged_seeds);
        self.nonconverged_seeds.sort_unstable();
        self.failures.extend(other.failures);
        self.failures.sort_by_key(|f| f.seed);
        self
    }

    pub fn all_converged(&self) -> bool {
        self.converged == self.seeds_run
    }
}

/// Independent runs that differ only in `cfg.seed`, executed in parallel.
pub fn run_batch<M, R>(
    model: &M,
    v0_rule: R,
    cfg: &PirConfig,
    seeds: &[u64],
    oracle: Option<&ValueFunction>,
) -> Result<RunBatchSummary>
where
    M: DpModel + ?Sized,
    R: Fn(u64) -> Result<ValueFunction> + Sync,
{
    if seeds.is_empty() {
        return Err(DpError::Domain("run_batch needs at least one seed".into()));
    }
    let nu = model.weights();
    Ok(seeds
        .par_iter()
        .map(|&seed| {
            let run_cfg = PirConfig { seed, ..*cfg };
            let outcome = v0_rule(seed).and_then(|v0| run_pir(model, &v0, &run_cfg, oracle));
            RunBatchSummary::from_run(seed, &outcome, oracle, nu)
        })
        .reduce(RunBatchSummary::empty, RunBatchSummary::merge))
}
