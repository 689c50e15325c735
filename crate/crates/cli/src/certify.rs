//! Certification suites behind `ciric-dp certify`.

use ciric_dp::bellman_ops::{
    apply_lambda_operator, certified_error_bound, lambda_operator_modulus, BoundTarget,
    ContractionClass, LambdaOperator, LambdaOperatorConfig, OptimalityOperator, PolicyOperator,
};
use ciric_dp::contraction_lab::{
    check_contraction, check_contraction_with_tol, estimate_modulus, example1_map,
    iterate_to_fixed_point, value_pairs, ContractionReport, ScalarSampler, WeightedOperator,
};
use ciric_dp::oracle_solvers::{exact_policy_value, lambda_operator_oracle, value_iteration};
use ciric_dp::value_space::{shift_by_weight, weighted_distance};
use ciric_dp::{random_mdp, DpModel, FiniteMdp, Policy, Result, ValueFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Slack on the λ-operator contraction ratio against `k(1−λ)/(1−λk)`.
pub const LAMBDA_RATIO_TOL: f64 = 1e-9;
/// Allowed truncated-series vs closed-form deviation.
pub const LAMBDA_ORACLE_TOL: f64 = 1e-9;
/// Accuracy of the value-iteration oracle for `V*`.
pub const VI_ORACLE_TOL: f64 = 1e-10;
/// Truncation tolerance used by the λ-operator suites.
pub const SUITE_TRUNCATION_TOL: f64 = 1e-10;

/// The generated 20-state, 4-control, α = 0.9, seed-1 model.
pub fn default_model() -> FiniteMdp {
    random_mdp(20, 4, 0.9, 1).expect("valid generator arguments")
}

pub fn random_policy(rng: &mut ChaCha8Rng, model: &FiniteMdp) -> Policy {
    let c = model.controls();
    let choice = (0..model.n_states())
        .map(|x| c.at(x)[rng.gen_range(0..c.at(x).len())])
        .collect();
    Policy::new(choice, c).expect("admissible by construction")
}

pub fn v_star_oracle(model: &FiniteMdp) -> Result<ValueFunction> {
    value_iteration(
        model,
        &ValueFunction::zeros(model.n_states()),
        VI_ORACLE_TOL,
        10_000_000,
    )?
    .into_converged()
}

#[derive(Debug, Clone, Serialize)]
pub struct MdpCiricReport {
    pub modulus: f64,
    pub samples: usize,
    pub optimality: ContractionReport,
    pub policy: ContractionReport,
    pub passed: bool,
}

/// Half-sum Ćirić inequality for `F` and `F_μ` at the model modulus.
/// Pairs are split evenly over ten random policies for `F_μ`.
pub fn certify_mdp_ciric(model: &FiniteMdp, samples: usize, seed: u64) -> Result<MdpCiricReport> {
    let modulus = model.contraction_modulus();
    let nu = model.weights();
    let pairs = value_pairs(model.n_states(), samples, 10.0, seed);

    let f = OptimalityOperator::new(model);
    let optimality = check_contraction(
        &WeightedOperator { op: &f, nu },
        ContractionClass::CiricHalfsum,
        modulus,
        &pairs,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let chunk = samples.div_ceil(10).max(1);
    let mut policy: Option<ContractionReport> = None;
    for part in pairs.chunks(chunk) {
        let mu = random_policy(&mut rng, model);
        let op = PolicyOperator::new(model, &mu)?;
        let report = check_contraction(
            &WeightedOperator { op: &op, nu },
            ContractionClass::CiricHalfsum,
            modulus,
            part,
        )?;
        policy = Some(match policy {
            None => report,
            Some(acc) => acc.merge(report),
        });
    }
    let policy = policy.expect("at least one sample");
    let passed = optimality.passed() && policy.passed();
    Ok(MdpCiricReport {
        modulus,
        samples,
        optimality,
        policy,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointSummary {
    pub starts: usize,
    pub tol: f64,
    pub max_iterations_allowed: usize,
    pub all_converged: bool,
    pub max_iterations_used: usize,
    pub max_abs_x_star: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Example1Report {
    /// Cross-term form at modulus 1/4.
    pub quasi: ContractionReport,
    /// Half-sum form at modulus 1/4, checked independently.
    pub halfsum: ContractionReport,
    pub halfsum_estimated_modulus: f64,
    /// Banach check on pairs straddling x = 1; violations are expected.
    pub banach: Vec<ContractionReport>,
    pub banach_refuted: bool,
    pub fixed_point: FixedPointSummary,
    pub passed: bool,
}

pub fn certify_example1(samples: usize, seed: u64) -> Result<Example1Report> {
    let t = example1_map();
    let sampler = ScalarSampler {
        uniform_pairs: samples,
        seed,
        ..Default::default()
    };
    let pairs = sampler.pairs(&t);
    let quasi = check_contraction(&t, ContractionClass::CiricQuasi, 0.25, &pairs)?;
    let halfsum = check_contraction(&t, ContractionClass::CiricHalfsum, 0.25, &pairs)?;
    let halfsum_estimated_modulus = estimate_modulus(&t, ContractionClass::CiricHalfsum, &pairs)?;

    let straddle: Vec<(f64, f64)> = [1e-3, 1e-6].iter().map(|d| (1.0, 1.0 + d)).collect();
    let banach = [0.9, 0.99, 0.999]
        .iter()
        .map(|&gamma| check_contraction(&t, ContractionClass::Banach, gamma, &straddle))
        .collect::<Result<Vec<_>>>()?;
    let banach_refuted = banach.iter().all(|r| r.violations > 0);

    let starts = 64;
    let (tol, max_iters) = (1e-12, 200);
    let mut fixed_point = FixedPointSummary {
        starts,
        tol,
        max_iterations_allowed: max_iters,
        all_converged: true,
        max_iterations_used: 0,
        max_abs_x_star: 0.0,
    };
    for i in 0..starts {
        let x0 = 2.0 * i as f64 / (starts - 1) as f64;
        let run = iterate_to_fixed_point(&t, x0, tol, max_iters)?;
        fixed_point.all_converged &= run.converged;
        fixed_point.max_iterations_used = fixed_point.max_iterations_used.max(run.iterations);
        fixed_point.max_abs_x_star = fixed_point.max_abs_x_star.max(run.x_star.abs());
    }
    let passed = quasi.passed()
        && banach_refuted
        && fixed_point.all_converged
        && fixed_point.max_abs_x_star <= tol;
    Ok(Example1Report {
        quasi,
        halfsum,
        halfsum_estimated_modulus,
        banach,
        banach_refuted,
        fixed_point,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaCase {
    pub lambda: f64,
    /// `k(1−λ)/(1−λk)`
    pub modulus: f64,
    pub contraction: ContractionReport,
    pub max_oracle_deviation: f64,
    pub max_fixed_point_deviation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaOpReport {
    pub samples: usize,
    pub truncation_tol: f64,
    pub cases: Vec<LambdaCase>,
    pub passed: bool,
}

/// For each λ: truncated series vs closed form on random `V`, `F_μ^λ V_μ = V_μ`,
/// and the contraction ratio against `k(1−λ)/(1−λk)` (classical convention).
pub fn certify_lambda_op(
    model: &FiniteMdp,
    lambdas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<LambdaOpReport> {
    let k = model.contraction_modulus();
    let nu = model.weights();
    let mut cases = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        let cfg = LambdaOperatorConfig {
            truncation_tol: SUITE_TRUNCATION_TOL,
            ..LambdaOperatorConfig::new(lambda)
        };
        let modulus = lambda_operator_modulus(lambda, k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let pairs = value_pairs(model.n_states(), samples, 10.0, rng.gen());

        let mut max_oracle_deviation = 0.0f64;
        let mut max_fixed_point_deviation = 0.0f64;
        let mut contraction: Option<ContractionReport> = None;
        for part in pairs.chunks(samples.div_ceil(10).max(1)) {
            let mu = random_policy(&mut rng, model);
            let v_mu = exact_policy_value(model, &mu)?;
            let at_fixed = apply_lambda_operator(model, &mu, &v_mu, &cfg)?.value;
            max_fixed_point_deviation =
                max_fixed_point_deviation.max(weighted_distance(&at_fixed, &v_mu, nu)?);
            for (v, _) in part {
                let truncated = apply_lambda_operator(model, &mu, v, &cfg)?.value;
                let exact = lambda_operator_oracle(model, &mu, v, lambda)?;
                max_oracle_deviation =
                    max_oracle_deviation.max(weighted_distance(&truncated, &exact, nu)?);
            }
            let op = LambdaOperator::new(model, &mu, cfg)?;
            let report = check_contraction_with_tol(
                &WeightedOperator { op: &op, nu },
                ContractionClass::CiricHalfsum,
                modulus,
                LAMBDA_RATIO_TOL,
                part,
            )?;
            contraction = Some(match contraction {
                None => report,
                Some(acc) => acc.merge(report),
            });
        }
        let contraction = contraction.expect("at least one sample");
        let passed = contraction.passed()
            && max_oracle_deviation <= LAMBDA_ORACLE_TOL
            && max_fixed_point_deviation <= LAMBDA_ORACLE_TOL;
        cases.push(LambdaCase {
            lambda,
            modulus,
            contraction,
            max_oracle_deviation,
            max_fixed_point_deviation,
            passed,
        });
    }
    let passed = cases.iter().all(|c| c.passed);
    Ok(LambdaOpReport {
        samples,
        truncation_tol: SUITE_TRUNCATION_TOL,
        cases,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub samples: usize,
    pub violations: usize,
    /// Largest observed `true error / certified bound`.
    pub max_tightness: f64,
    pub worst_excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub sigma: f64,
    pub gamma: f64,
    pub oracle_tol: f64,
    pub optimal: BoundCheck,
    pub policy: BoundCheck,
    pub passed: bool,
}

/// Test points: uniform draws, small perturbations of the fixed point, and
/// constant shifts `fixed + c·ν`, where the bound is attained.
fn bound_samples(
    fixed: &ValueFunction,
    model: &FiniteMdp,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ValueFunction>> {
    let n = model.n_states();
    (0..count)
        .map(|i| match i % 4 {
            0 | 1 => ValueFunction::new((0..n).map(|_| rng.gen_range(-20.0..20.0)).collect()),
            2 => ValueFunction::new(fixed.iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect()),
            _ => shift_by_weight(fixed, rng.gen_range(-5.0..5.0), model.weights()),
        })
        .collect()
}

fn record(check: &mut BoundCheck, error: f64, bound: f64, slack: f64) {
    check.samples += 1;
    if error > bound + slack {
        check.violations += 1;
        check.worst_excess = check.worst_excess.max(error - bound);
    }
    if bound > 0.0 {
        check.max_tightness = check.max_tightness.max(error / bound);
    }
}

/// `‖V* − V‖ ≤ γ‖FV − V‖` on `samples` points, and `‖V_μ − V‖ ≤ γ‖F_μV − V‖`
/// for 10 random policies with `samples / 10` points each. The oracle's own
/// accuracy is allowed as additive slack.
pub fn certify_bounds(model: &FiniteMdp, samples: usize, seed: u64) -> Result<BoundsReport> {
    let sigma = model.contraction_modulus();
    let gamma = ciric_dp::gamma_bound_constant(sigma)?;
    let nu = model.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v_star = v_star_oracle(model)?;
    let empty = BoundCheck {
        samples: 0,
        violations: 0,
        max_tightness: 0.0,
        worst_excess: 0.0,
    };

    let mut optimal = empty.clone();
    for v in bound_samples(&v_star, model, samples, &mut rng)? {
        let bound = certified_error_bound(model, &v, BoundTarget::Optimal, sigma)?;
        record(
            &mut optimal,
            weighted_distance(&v_star, &v, nu)?,
            bound,
            VI_ORACLE_TOL,
        );
    }

    let mut policy = empty;
    for _ in 0..10 {
        let mu = random_policy(&mut rng, model);
        let v_mu = exact_policy_value(model, &mu)?;
        for v in bound_samples(&v_mu, model, samples.div_ceil(10), &mut rng)? {
            let bound = certified_error_bound(model, &v, BoundTarget::Policy(&mu), sigma)?;
            record(
                &mut policy,
                weighted_distance(&v_mu, &v, nu)?,
                bound,
                VI_ORACLE_TOL,
            );
        }
    }
    let passed = optimal.violations == 0 && policy.violations == 0;
    Ok(BoundsReport {
        sigma,
        gamma,
        oracle_tol: VI_ORACLE_TOL,
        optimal,
        policy,
        passed,
    })
}
