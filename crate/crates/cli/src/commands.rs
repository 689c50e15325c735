//! Command implementations and the exit-code contract.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use ciric_dp::bellman_ops::ExponentConvention;
use ciric_dp::oracle_solvers::{enumerate_policies, policy_iteration_exact, value_iteration};
use ciric_dp::value_space::strict_order_failures;
use ciric_dp::{
    apply_optimality_operator, gamma_bound_constant, load_model, random_mdp, shift_by_weight,
    weighted_distance, DpError, DpModel, FiniteMdp, LambdaOperatorConfig, PSchedule, PirConfig,
    PirTrace, RunBatchSummary, ValueFunction,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    CertifyArgs, CertifyTarget, Command, ConventionArg, GenArgs, PirArgs, SolveArgs, SolveMethod,
};
use crate::certify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;
pub const EXIT_CERTIFICATION: i32 = 5;

pub const SCHEMA_VERSION: u32 = 1;

/// Iteration budget for the in-process `V*` estimate.
const ORACLE_MAX_ITERS: usize = 10_000_000;

/// A failed command. Any partial report has already been written.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<DpError> for CliError {
    fn from(e: DpError) -> Self {
        let code = match e {
            DpError::NonConvergence { .. } => EXIT_NONCONVERGENCE,
            DpError::Precondition { .. } => EXIT_PRECONDITION,
            DpError::Internal(_) => EXIT_INTERNAL,
            _ => EXIT_INPUT,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_INPUT, format!("i/o error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new(EXIT_INPUT, format!("csv error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(EXIT_INTERNAL, format!("serialization error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Pir(a) => cmd_pir(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Gen(a) => cmd_gen(&a),
    }
}

/// Wraps `body` as a top-level report object carrying `schema_version`.
fn versioned<T: Serialize>(body: &T) -> CliResult<Value> {
    let mut value = serde_json::to_value(body)?;
    match value.as_object_mut() {
        Some(map) => {
            map.insert("schema_version".into(), json!(SCHEMA_VERSION));
            Ok(value)
        }
        None => Err(CliError::new(EXIT_INTERNAL, "report is not a JSON object")),
    }
}

fn emit(report: &Value, out: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    method: &'static str,
    n_states: usize,
    converged: bool,
    v_star: ValueFunction,
    policy: ciric_dp::Policy,
    /// `‖F V − V‖` in the weighted norm.
    residual: f64,
    iterations: u128,
    /// Seconds; null unless `--record-timing`.
    wall_time: Option<f64>,
}

pub fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let started = Instant::now();
    let (values, converged, iterations) = match args.method {
        SolveMethod::Vi => {
            let start = ValueFunction::zeros(model.n_states());
            let outcome = value_iteration(&model, &start, args.tol, args.max_iters)?;
            (
                outcome.values,
                outcome.converged,
                outcome.iterations as u128,
            )
        }
        SolveMethod::PiExact => {
            let (v, _, iters) = policy_iteration_exact(&model, args.max_iters)?;
            (v, true, iters as u128)
        }
        SolveMethod::Enumerate => {
            let e = enumerate_policies(&model, args.cap)?;
            (e.values, true, e.policies_evaluated)
        }
    };
    let wall_time = args.record_timing.then(|| started.elapsed().as_secs_f64());
    let (fv, policy) = apply_optimality_operator(&model, &values)?;
    let residual = weighted_distance(&fv, &values, model.weights())?;
    let report = SolveReport {
        method: args.method.name(),
        n_states: model.n_states(),
        converged,
        v_star: values,
        policy,
        residual,
        iterations,
        wall_time,
    };
    emit(&versioned(&report)?, args.out.as_deref())?;
    if !converged {
        return Err(CliError::new(
            EXIT_NONCONVERGENCE,
            format!(
                "value iteration did not converge in {} iterations (residual {residual:e})",
                args.max_iters
            ),
        ));
    }
    Ok(())
}

pub fn pir_config(args: &PirArgs, model: &FiniteMdp) -> PirConfig {
    let schedule = match (args.p0, args.beta, args.p_min) {
        (Some(p0), Some(beta), Some(p_min)) => PSchedule::Geometric { p0, beta, p_min },
        _ => PSchedule::Constant { p: args.p },
    };
    let exponent_convention = match args.convention {
        ConventionArg::Classical => ExponentConvention::ClassicalLPlus1,
        ConventionArg::PowerL => ExponentConvention::PowerL,
    };
    PirConfig {
        lambda: LambdaOperatorConfig {
            lambda: args.lambda,
            truncation_tol: args.truncation_tol,
            max_terms: args.max_terms,
            exponent_convention,
        },
        schedule,
        stop_tol: args.tol,
        max_iterations: args.max_iters,
        seed: args.seed.unwrap_or(0),
        sigma: args.sigma.unwrap_or_else(|| model.contraction_modulus()),
        enforce_initial_condition: !args.no_enforce,
        oracle_tol: PirConfig::default().oracle_tol,
        record_timing: args.record_timing,
    }
}

fn seeds_of(args: &PirArgs) -> Vec<u64> {
    match (&args.seeds, args.seed) {
        (Some(list), _) => list.0.clone(),
        (None, Some(seed)) => vec![seed],
        (None, None) => vec![0],
    }
}

/// Writes one trace: `k, branch, residual, certified_bound, wall_time_ns`,
/// then `v0..v{n-1}` when `values` is set.
pub fn write_trace_csv(path: &Path, trace: &PirTrace, values: bool) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = trace.final_values.len();
    let mut header: Vec<String> = ["k", "branch", "residual", "certified_bound", "wall_time_ns"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if values {
        header.extend((0..n).map(|i| format!("v{i}")));
    }
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![
            r.k.to_string(),
            r.branch.as_str().to_string(),
            r.residual.to_string(),
            r.certified_bound.to_string(),
            r.wall_time_ns.to_string(),
        ];
        if values {
            row.extend(r.values.iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SeedMeta {
    seed: u64,
    trace: String,
    converged: bool,
    iterations: usize,
    final_residual: f64,
    final_certified_bound: f64,
    final_error: f64,
    sandwich_ok: bool,
    truncation_warnings: usize,
}

#[derive(Serialize)]
struct PirSummary<'a> {
    model: String,
    config: &'a PirConfig,
    v0_shift: f64,
    oracle: OracleMeta,
    seeds: Vec<SeedMeta>,
    summary: RunBatchSummary,
}

#[derive(Serialize)]
struct OracleMeta {
    method: &'static str,
    tol: f64,
    iterations: usize,
}

pub fn cmd_pir(args: &PirArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let cfg = pir_config(args, &model);
    cfg.validate()?;
    let seeds = seeds_of(args);
    let nu = model.weights();

    let oracle_tol = certify::VI_ORACLE_TOL;
    let oracle_run = value_iteration(
        &model,
        &ValueFunction::zeros(model.n_states()),
        oracle_tol,
        ORACLE_MAX_ITERS,
    )?;
    let oracle_iterations = oracle_run.iterations;
    let v_star = oracle_run.into_converged()?;
    let v0 = shift_by_weight(&v_star, args.v0_shift, nu)?;

    if cfg.enforce_initial_condition {
        let (fv0, _) = apply_optimality_operator(&model, &v0)?;
        let failing = strict_order_failures(&fv0, &v0)?;
        if !failing.is_empty() {
            return Err(CliError::new(
                EXIT_PRECONDITION,
                format!("initial condition F V0 < V0 fails at states {failing:?}; raise --v0-shift or pass --no-enforce"),
            ));
        }
    }

    fs::create_dir_all(&args.out_dir)?;
    let runs: Vec<(u64, ciric_dp::Result<(ValueFunction, PirTrace)>)> = seeds
        .par_iter()
        .map(|&seed| {
            (
                seed,
                ciric_dp::run_pir(&model, &v0, &PirConfig { seed, ..cfg }, Some(&v_star)),
            )
        })
        .collect();

    let mut metas = Vec::with_capacity(runs.len());
    let mut summary = RunBatchSummary::empty();
    for (seed, outcome) in &runs {
        summary = summary.merge(RunBatchSummary::from_run(*seed, outcome, Some(&v_star), nu));
        let (v, trace) = match outcome {
            Ok(ok) => ok,
            Err(e) => return Err(CliError::from(e.clone())),
        };
        let name = format!("trace_seed_{seed}.csv");
        write_trace_csv(&args.out_dir.join(&name), trace, args.values)?;
        metas.push(SeedMeta {
            seed: *seed,
            trace: name,
            converged: trace.converged,
            iterations: trace.iterations,
            final_residual: trace.final_residual,
            final_certified_bound: trace.final_certified_bound,
            final_error: weighted_distance(v, &v_star, nu)?,
            sandwich_ok: trace.sandwich_holds(),
            truncation_warnings: trace.truncation_warnings,
        });
    }

    let report = PirSummary {
        model: args.model.display().to_string(),
        config: &cfg,
        v0_shift: args.v0_shift,
        oracle: OracleMeta {
            method: "vi",
            tol: oracle_tol,
            iterations: oracle_iterations,
        },
        seeds: metas,
        summary,
    };
    emit(
        &versioned(&report)?,
        Some(&args.out_dir.join("summary.json")),
    )?;
    if !report.summary.all_converged() {
        return Err(CliError::new(
            EXIT_NONCONVERGENCE,
            format!(
                "seeds {:?} did not converge within {} iterations",
                report.summary.nonconverged_seeds, args.max_iters
            ),
        ));
    }
    Ok(())
}

pub fn cmd_certify(args: &CertifyArgs) -> CliResult<()> {
    let model = || -> CliResult<FiniteMdp> {
        Ok(match &args.model {
            Some(path) => load_model(path)?,
            None => certify::default_model(),
        })
    };
    let (passed, body) = match args.target {
        CertifyTarget::MdpCiric => {
            let r =
                certify::certify_mdp_ciric(&model()?, args.samples.unwrap_or(10_000), args.seed)?;
            (r.passed, versioned(&r)?)
        }
        CertifyTarget::Example1 => {
            let r = certify::certify_example1(args.samples.unwrap_or(100_000), args.seed)?;
            (r.passed, versioned(&r)?)
        }
        CertifyTarget::LambdaOp => {
            let r = certify::certify_lambda_op(
                &model()?,
                &args.lambda,
                args.samples.unwrap_or(100),
                args.seed,
            )?;
            (r.passed, versioned(&r)?)
        }
        CertifyTarget::Bounds => {
            let r = certify::certify_bounds(&model()?, args.samples.unwrap_or(1000), args.seed)?;
            (r.passed, versioned(&r)?)
        }
    };
    let mut body = body;
    if let Some(map) = body.as_object_mut() {
        map.insert("target".into(), json!(target_name(args.target)));
    }
    emit(&body, args.out.as_deref())?;
    if passed {
        Ok(())
    } else {
        Err(CliError::new(
            EXIT_CERTIFICATION,
            format!(
                "certification {} failed; see report",
                target_name(args.target)
            ),
        ))
    }
}

fn target_name(t: CertifyTarget) -> &'static str {
    match t {
        CertifyTarget::MdpCiric => "mdp-ciric",
        CertifyTarget::Example1 => "example1",
        CertifyTarget::LambdaOp => "lambda-op",
        CertifyTarget::Bounds => "bounds",
    }
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let model = random_mdp(args.states, args.controls, args.discount, args.seed)?;
    // Fail early on a modulus the certificates cannot use.
    gamma_bound_constant(model.contraction_modulus())?;
    let text = model.to_json()? + "\n";
    match &args.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
