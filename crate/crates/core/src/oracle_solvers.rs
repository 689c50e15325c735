//! Ground-truth solvers for finite discounted MDPs: exact policy evaluation by
//! a dense linear solve, value iteration, exhaustive policy enumeration, exact
//! policy iteration, and a closed-form λ-operator.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bellman_ops::{apply_optimality_operator, apply_policy_operator};
use crate::dp_model::{Control, DpModel, FiniteMdp, Policy};
use crate::error::{DpError, Result};
use crate::value_space::{check_len, weighted_distance, ValueFunction};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// `(I − α P_μ)` and `g_μ`.
fn policy_system(model: &FiniteMdp, mu: &Policy) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let slots = mu.slots(model.controls())?;
    let n = model.n_states();
    let alpha = model.discount();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut g = DVector::<f64>::zeros(n);
    for x in 0..n {
        g[x] = model.cost(x, slots[x]);
        for (y, p) in model.transition_row(x, slots[x]).iter().enumerate() {
            a[(x, y)] -= alpha * p;
        }
    }
    Ok((a, g))
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<ValueFunction> {
    let x = a.lu().solve(&b).ok_or_else(|| {
        DpError::Internal("singular system; I − αP must be invertible for α < 1".into())
    })?;
    ValueFunction::new(x.iter().copied().collect())
}

/// `V_μ` from `V = g_μ + α P_μ V`.
pub fn exact_policy_value(model: &FiniteMdp, mu: &Policy) -> Result<ValueFunction> {
    let (a, g) = policy_system(model, mu)?;
    solve(a, g)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationOutcome {
    pub values: ValueFunction,
    pub iterations: usize,
    /// Last step size `‖V_{k+1} − V_k‖`.
    pub last_step: f64,
    pub converged: bool,
}

impl IterationOutcome {
    pub fn into_converged(self) -> Result<ValueFunction> {
        if self.converged {
            Ok(self.values)
        } else {
            Err(DpError::NonConvergence {
                iterations: self.iterations,
                residual: self.last_step,
            })
        }
    }
}

/// `V_{k+1} = F V_k` until `‖V_{k+1} − V_k‖ ≤ tol (1−α)/α`, which keeps the
/// returned iterate within `tol` of `V*`.
pub fn value_iteration<M: DpModel + ?Sized>(
    model: &M,
    v0: &ValueFunction,
    tol: f64,
    max_iters: usize,
) -> Result<IterationOutcome> {
    if !(tol > 0.0) {
        return Err(DpError::Domain(format!("tol must be positive, got {tol}")));
    }
    check_len(model.n_states(), v0.len())?;
    let alpha = model.contraction_modulus();
    if !(alpha < 1.0) {
        return Err(DpError::Domain(format!(
            "model modulus {alpha} is not below 1"
        )));
    }
    let threshold = tol * (1.0 - alpha) / alpha;
    let nu = model.weights();
    let mut v = v0.clone();
    let mut last_step = f64::INFINITY;
    for k in 0..=max_iters {
        let next = apply_optimality_operator(model, &v)?.0;
        last_step = weighted_distance(&next, &v, nu)?;
        if last_step <= threshold {
            return Ok(IterationOutcome {
                values: next,
                iterations: k + 1,
                last_step,
                converged: true,
            });
        }
        if k == max_iters {
            break;
        }
        v = next;
    }
    Ok(IterationOutcome {
        values: v,
        iterations: max_iters,
        last_step,
        converged: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Enumeration {
    /// Pointwise minimum of `V_μ` over all policies.
    pub values: ValueFunction,
    /// A policy attaining the minimum at every state.
    pub policy: Policy,
    pub policies_evaluated: u128,
}

/// Evaluates every deterministic policy exactly and takes the pointwise minimum.
pub fn enumerate_policies(model: &FiniteMdp, cap: u128) -> Result<Enumeration> {
    let controls = model.controls();
    let count = controls.policy_count();
    if count > cap {
        return Err(DpError::EnumerationCap { count, cap });
    }
    let n = model.n_states();
    let radix: Vec<usize> = (0..n).map(|x| controls.at(x).len()).collect();
    let mut digits = vec![0usize; n];
    let mut min = vec![f64::INFINITY; n];
    let mut evaluated: Vec<(Policy, ValueFunction)> = Vec::new();
    loop {
        let choice: Vec<Control> = digits
            .iter()
            .enumerate()
            .map(|(x, &d)| controls.at(x)[d])
            .collect();
        let mu = Policy::from_admissible(choice);
        let v = exact_policy_value(model, &mu)?;
        for (m, &vx) in min.iter_mut().zip(v.iter()) {
            *m = m.min(vx);
        }
        evaluated.push((mu, v));
        // Mixed-radix increment.
        let mut x = 0;
        while x < n {
            digits[x] += 1;
            if digits[x] < radix[x] {
                break;
            }
            digits[x] = 0;
            x += 1;
        }
        if x == n {
            break;
        }
    }
    let values = ValueFunction::new(min)?;
    let scale = 1.0 + values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (policy, _) = evaluated
        .iter()
        .map(|(mu, v)| (mu, v.max_abs_diff(&values).unwrap_or(f64::INFINITY)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .filter(|(_, gap)| *gap <= 1e-9 * scale)
        .ok_or_else(|| {
            DpError::Internal("no single policy attains the pointwise minimum".into())
        })?;
    Ok(Enumeration {
        values,
        policy: policy.clone(),
        policies_evaluated: count,
    })
}

/// Howard policy iteration with exact evaluation.
pub fn policy_iteration_exact(
    model: &FiniteMdp,
    max_iters: usize,
) -> Result<(ValueFunction, Policy, usize)> {
    let mut mu = Policy::first(model.controls());
    for k in 1..=max_iters {
        let v = exact_policy_value(model, &mu)?;
        let (fv, greedy) = apply_optimality_operator(model, &v)?;
        // Keep the incumbent control unless the greedy one is strictly better.
        let choice: Vec<Control> = (0..model.n_states())
            .map(|x| {
                let current = model.evaluate_h(x, mu.at(x), &v).expect("admissible");
                if fv[x] < current - 1e-12 * (1.0 + current.abs()) {
                    greedy.at(x)
                } else {
                    mu.at(x)
                }
            })
            .collect();
        let next = Policy::from_admissible(choice);
        if next == mu {
            return Ok((v, mu, k));
        }
        mu = next;
    }
    Err(DpError::NonConvergence {
        iterations: max_iters,
        residual: f64::NAN,
    })
}

/// Exact classical-convention `F_μ^λ v = Σ_l (1−λ) λ^l F_μ^{l+1} v`.
///
/// `W = F_μ^λ v` satisfies `W = (1−λ) F_μ v + λ F_μ W`, i.e.
/// `(I − λα P_μ) W = (1−λ) F_μ v + λ g_μ`.
pub fn lambda_operator_oracle(
    model: &FiniteMdp,
    mu: &Policy,
    v: &ValueFunction,
    lambda: f64,
) -> Result<ValueFunction> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(DpError::Domain(format!(
            "lambda must lie in [0, 1), got {lambda}"
        )));
    }
    let f_v = apply_policy_operator(model, mu, v)?;
    if lambda == 0.0 {
        return Ok(f_v);
    }
    let slots = mu.slots(model.controls())?;
    let n = model.n_states();
    let alpha = model.discount();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for x in 0..n {
        b[x] = (1.0 - lambda) * f_v[x] + lambda * model.cost(x, slots[x]);
        for (y, p) in model.transition_row(x, slots[x]).iter().enumerate() {
            a[(x, y)] -= lambda * alpha * p;
        }
    }
    solve(a, b)
}
