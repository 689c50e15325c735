//! Policy and optimality Bellman operators, operator powers, the multistep
//! λ-operator, the Ćirić comparison quantities, and the a-posteriori error
//! bound constants.

use serde::{Deserialize, Serialize};

use crate::dp_model::{Control, DpModel, Policy};
use crate::error::{DpError, Result};
use crate::value_space::{check_len, weighted_distance, ValueFunction, WeightFunction};

/// A self-map of B(X).
pub trait ValueOperator {
    fn apply(&self, v: &ValueFunction) -> Result<ValueFunction>;
}

/// Writes `F_μ src` into `dst`; `slots[x]` indexes `U(x)`.
pub(crate) fn policy_apply_into<M: DpModel + ?Sized>(
    model: &M,
    slots: &[usize],
    src: &[f64],
    dst: &mut [f64],
) {
    for (x, out) in dst.iter_mut().enumerate() {
        *out = model.h_slot(x, slots[x], src);
    }
}

fn max_weighted_gap(a: &[f64], b: &[f64], nu: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(nu)
        .fold(0.0, |acc, ((x, y), w)| f64::max(acc, (x - y).abs() / w))
}

pub fn apply_policy_operator<M: DpModel + ?Sized>(
    model: &M,
    mu: &Policy,
    v: &ValueFunction,
) -> Result<ValueFunction> {
    check_len(model.n_states(), v.len())?;
    let slots = mu.slots(model.controls())?;
    let mut out = vec![0.0; v.len()];
    policy_apply_into(model, &slots, v.as_slice(), &mut out);
    ValueFunction::new(out)
}

/// `FV` together with the greedy policy attaining it. Ties go to the lowest
/// control identifier.
pub fn apply_optimality_operator<M: DpModel + ?Sized>(
    model: &M,
    v: &ValueFunction,
) -> Result<(ValueFunction, Policy)> {
    check_len(model.n_states(), v.len())?;
    let controls = model.controls();
    let mut values = Vec::with_capacity(v.len());
    let mut choice: Vec<Control> = Vec::with_capacity(v.len());
    for x in 0..model.n_states() {
        let mut best = (f64::INFINITY, Control::MAX);
        for (slot, &u) in controls.at(x).iter().enumerate() {
            let h = model.h_slot(x, slot, v.as_slice());
            if h < best.0 || (h == best.0 && u < best.1) {
                best = (h, u);
            }
        }
        values.push(best.0);
        choice.push(best.1);
    }
    Ok((ValueFunction::new(values)?, Policy::from_admissible(choice)))
}

/// `F_μ^l v`; `l = 0` returns `v`.
pub fn apply_power<M: DpModel + ?Sized>(
    model: &M,
    mu: &Policy,
    v: &ValueFunction,
    l: usize,
) -> Result<ValueFunction> {
    check_len(model.n_states(), v.len())?;
    let slots = mu.slots(model.controls())?;
    let mut cur = v.as_slice().to_vec();
    let mut next = vec![0.0; cur.len()];
    for _ in 0..l {
        policy_apply_into(model, &slots, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    ValueFunction::new(cur)
}

/// Which power of `F_μ` the `l`-th series term carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentConvention {
    /// `Σ (1−λ) λ^l F_μ^l V`; the `l = 0` term is `V` itself.
    PowerL,
    /// `Σ (1−λ) λ^l F_μ^{l+1} V`; reduces to `F_μ` at `λ = 0`.
    ClassicalLPlus1,
}

impl ExponentConvention {
    fn offset(self) -> usize {
        match self {
            ExponentConvention::PowerL => 0,
            ExponentConvention::ClassicalLPlus1 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaOperatorConfig {
    pub lambda: f64,
    pub truncation_tol: f64,
    pub max_terms: usize,
    pub exponent_convention: ExponentConvention,
}

impl Default for LambdaOperatorConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            truncation_tol: 1e-10,
            max_terms: 100_000,
            exponent_convention: ExponentConvention::ClassicalLPlus1,
        }
    }
}

impl LambdaOperatorConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(DpError::Domain(format!(
                "lambda must lie in [0, 1), got {}",
                self.lambda
            )));
        }
        if !(self.truncation_tol > 0.0) {
            return Err(DpError::Domain(format!(
                "truncation_tol must be positive, got {}",
                self.truncation_tol
            )));
        }
        if self.max_terms == 0 {
            return Err(DpError::Domain("max_terms must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of a truncated λ-operator evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaApplication {
    pub value: ValueFunction,
    /// Number of series terms `L + 1` actually evaluated.
    pub terms: usize,
    /// Computable bound on the distance to the untruncated series.
    pub tail_bound: f64,
    /// Set when `max_terms` was hit before the tail bound met `truncation_tol`.
    pub truncation_warning: bool,
}

/// Truncated `F_μ^λ v`.
///
/// Terms `T_l = F_μ^{e(l)} v` are accumulated with weights `(1−λ)λ^l` until
/// `λ^{L+1} ‖T_L − T_{L−1}‖ / (1 − λk) ≤ truncation_tol`, where `k` is the
/// model's contraction modulus. The leftover mass `λ^{L+1}` is placed on the
/// last term, so the weights sum to exactly one and the result stays an affine
/// combination of the iterates. With that placement the truncation error is
/// at most `k λ^{L+1} ‖T_L − T_{L−1}‖ / (1 − λk)`.
pub fn apply_lambda_operator<M: DpModel + ?Sized>(
    model: &M,
    mu: &Policy,
    v: &ValueFunction,
    cfg: &LambdaOperatorConfig,
) -> Result<LambdaApplication> {
    cfg.validate()?;
    check_len(model.n_states(), v.len())?;
    let slots = mu.slots(model.controls())?;
    let lambda = cfg.lambda;
    let k = model.contraction_modulus();
    if lambda > 0.0 && !(k < 1.0) {
        return Err(DpError::Domain(format!(
            "model modulus {k} is not below 1 in the weighted norm; the tail bound does not apply"
        )));
    }
    let nu = model.weights().as_slice();
    let n = v.len();

    let mut cur = v.as_slice().to_vec();
    let mut next = vec![0.0; n];
    for _ in 0..cfg.exponent_convention.offset() {
        policy_apply_into(model, &slots, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    if lambda == 0.0 {
        return Ok(LambdaApplication {
            value: ValueFunction::new(cur)?,
            terms: 1,
            tail_bound: 0.0,
            truncation_warning: false,
        });
    }

    // acc holds Σ_{l<L} (1−λ)λ^l T_l; cur is T_L; lam_pow is λ^L.
    let mut acc = vec![0.0; n];
    let mut lam_pow = 1.0;
    let mut last_index = 0usize;
    let mut tail_bound = f64::INFINITY;
    loop {
        if last_index + 1 >= cfg.max_terms {
            break;
        }
        let w = (1.0 - lambda) * lam_pow;
        for (a, c) in acc.iter_mut().zip(&cur) {
            *a += w * c;
        }
        policy_apply_into(model, &slots, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        lam_pow *= lambda;
        last_index += 1;
        let delta = max_weighted_gap(&cur, &next, nu);
        tail_bound = lambda * lam_pow * delta / (1.0 - lambda * k);
        if tail_bound <= cfg.truncation_tol {
            break;
        }
    }
    for (a, c) in acc.iter_mut().zip(&cur) {
        *a += lam_pow * c;
    }
    let truncation_warning = !(tail_bound <= cfg.truncation_tol);
    Ok(LambdaApplication {
        value: ValueFunction::new(acc)?,
        terms: last_index + 1,
        tail_bound,
        truncation_warning,
    })
}

/// `F_μ` as an operator handle.
pub struct PolicyOperator<'a, M: DpModel + ?Sized> {
    model: &'a M,
    slots: Vec<usize>,
}

impl<'a, M: DpModel + ?Sized> PolicyOperator<'a, M> {
    pub fn new(model: &'a M, mu: &Policy) -> Result<Self> {
        Ok(Self {
            model,
            slots: mu.slots(model.controls())?,
        })
    }
}

impl<M: DpModel + ?Sized> ValueOperator for PolicyOperator<'_, M> {
    fn apply(&self, v: &ValueFunction) -> Result<ValueFunction> {
        check_len(self.model.n_states(), v.len())?;
        let mut out = vec![0.0; v.len()];
        policy_apply_into(self.model, &self.slots, v.as_slice(), &mut out);
        Ok(ValueFunction::from_finite(out))
    }
}

/// `F` as an operator handle.
pub struct OptimalityOperator<'a, M: DpModel + ?Sized> {
    model: &'a M,
}

impl<'a, M: DpModel + ?Sized> OptimalityOperator<'a, M> {
    pub fn new(model: &'a M) -> Self {
        Self { model }
    }
}

impl<M: DpModel + ?Sized> ValueOperator for OptimalityOperator<'_, M> {
    fn apply(&self, v: &ValueFunction) -> Result<ValueFunction> {
        apply_optimality_operator(self.model, v).map(|(fv, _)| fv)
    }
}

/// `F_μ^λ` as an operator handle.
pub struct LambdaOperator<'a, M: DpModel + ?Sized> {
    model: &'a M,
    mu: Policy,
    cfg: LambdaOperatorConfig,
}

impl<'a, M: DpModel + ?Sized> LambdaOperator<'a, M> {
    pub fn new(model: &'a M, mu: &Policy, cfg: LambdaOperatorConfig) -> Result<Self> {
        cfg.validate()?;
        mu.slots(model.controls())?;
        Ok(Self {
            model,
            mu: mu.clone(),
            cfg,
        })
    }
}

impl<M: DpModel + ?Sized> ValueOperator for LambdaOperator<'_, M> {
    fn apply(&self, v: &ValueFunction) -> Result<ValueFunction> {
        apply_lambda_operator(self.model, &self.mu, v, &self.cfg).map(|a| a.value)
    }
}

/// Contraction inequality families distinguished by the denominator they use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractionClass {
    /// `d(Tx, Ty) ≤ k d(x, y)`
    Banach,
    /// `k max(d(x,y), d(x,Tx), d(y,Ty), ½(d(x,Ty) + d(y,Tx)))`
    CiricHalfsum,
    /// `k max(d(x,y), d(x,Ty), d(y,Tx))`
    CiricQuasi,
}

impl ContractionClass {
    pub const ALL: [ContractionClass; 3] = [
        ContractionClass::Banach,
        ContractionClass::CiricHalfsum,
        ContractionClass::CiricQuasi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContractionClass::Banach => "banach",
            ContractionClass::CiricHalfsum => "ciric_halfsum",
            ContractionClass::CiricQuasi => "ciric_quasi",
        }
    }
}

/// Every distance entering the Ćirić inequalities for one pair `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CiricComparison {
    /// `d(x, y)`
    pub pair: f64,
    /// `d(x, Tx)`
    pub first_residual: f64,
    /// `d(y, Ty)`
    pub second_residual: f64,
    /// `d(x, Ty)`
    pub first_cross: f64,
    /// `d(y, Tx)`
    pub second_cross: f64,
    /// `½ (d(x, Ty) + d(y, Tx))`
    pub half_sum: f64,
    /// Left side `d(Tx, Ty)`.
    pub image: f64,
}

impl CiricComparison {
    pub fn from_points<P>(
        map: impl Fn(&P) -> Result<P>,
        dist: impl Fn(&P, &P) -> Result<f64>,
        x: &P,
        y: &P,
    ) -> Result<Self> {
        let tx = map(x)?;
        let ty = map(y)?;
        let first_cross = dist(x, &ty)?;
        let second_cross = dist(y, &tx)?;
        Ok(Self {
            pair: dist(x, y)?,
            first_residual: dist(x, &tx)?,
            second_residual: dist(y, &ty)?,
            first_cross,
            second_cross,
            half_sum: 0.5 * (first_cross + second_cross),
            image: dist(&tx, &ty)?,
        })
    }

    /// Max of the four Definition-style candidates (half-sum form).
    pub fn max_candidate(&self) -> f64 {
        self.denominator(ContractionClass::CiricHalfsum)
    }

    pub fn denominator(&self, class: ContractionClass) -> f64 {
        match class {
            ContractionClass::Banach => self.pair,
            ContractionClass::CiricHalfsum => self
                .pair
                .max(self.first_residual)
                .max(self.second_residual)
                .max(self.half_sum),
            ContractionClass::CiricQuasi => self.pair.max(self.first_cross).max(self.second_cross),
        }
    }

    /// `d(Tx,Ty) / denominator`, undefined when the denominator vanishes.
    pub fn ratio_for(&self, class: ContractionClass) -> Option<f64> {
        let den = self.denominator(class);
        (den > 0.0).then(|| self.image / den)
    }

    pub fn ratio(&self) -> Option<f64> {
        self.ratio_for(ContractionClass::CiricHalfsum)
    }
}

pub fn ciric_comparison<O: ValueOperator + ?Sized>(
    op: &O,
    nu: &WeightFunction,
    v: &ValueFunction,
    v_prime: &ValueFunction,
) -> Result<CiricComparison> {
    CiricComparison::from_points(
        |p| op.apply(p),
        |a, b| weighted_distance(a, b, nu),
        v,
        v_prime,
    )
}

/// `γ(σ) = max((2−σ)/(2−2σ), 1/(1−σ))`, converting the fixed-point residual
/// into a bound on the distance to the fixed point.
pub fn gamma_bound_constant(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(DpError::Domain(format!(
            "sigma must lie in (0, 1), got {sigma}"
        )));
    }
    Ok(f64::max(
        (2.0 - sigma) / (2.0 - 2.0 * sigma),
        1.0 / (1.0 - sigma),
    ))
}

/// `ρ = Σ_{l≥1} (1−λ) λ^l k^l = (1−λ) λk / (1−λk)`.
pub fn rho_modulus(lambda: f64, k: f64) -> Result<f64> {
    check_lambda_k(lambda, k)?;
    Ok((1.0 - lambda) * lambda * k / (1.0 - lambda * k))
}

/// Lipschitz modulus of the classical-convention λ-operator of a
/// `k`-contraction: `Σ_{l≥0} (1−λ) λ^l k^{l+1} = k (1−λ) / (1−λk)`.
pub fn lambda_operator_modulus(lambda: f64, k: f64) -> Result<f64> {
    check_lambda_k(lambda, k)?;
    Ok(k * (1.0 - lambda) / (1.0 - lambda * k))
}

fn check_lambda_k(lambda: f64, k: f64) -> Result<()> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(DpError::Domain(format!(
            "lambda must lie in [0, 1), got {lambda}"
        )));
    }
    if !(k > 0.0 && k < 1.0) {
        return Err(DpError::Domain(format!("k must lie in (0, 1), got {k}")));
    }
    Ok(())
}

/// Which fixed point a certificate refers to.
#[derive(Debug, Clone, Copy)]
pub enum BoundTarget<'a> {
    /// `V*`, via `‖V* − V‖ ≤ γ ‖FV − V‖`.
    Optimal,
    /// `V_μ`, via `‖V_μ − V‖ ≤ γ ‖F_μV − V‖`.
    Policy(&'a Policy),
}

/// A-posteriori bound on the distance from `v` to the fixed point.
pub fn certified_error_bound<M: DpModel + ?Sized>(
    model: &M,
    v: &ValueFunction,
    target: BoundTarget<'_>,
    sigma: f64,
) -> Result<f64> {
    let gamma = gamma_bound_constant(sigma)?;
    let image = match target {
        BoundTarget::Optimal => apply_optimality_operator(model, v)?.0,
        BoundTarget::Policy(mu) => apply_policy_operator(model, mu, v)?,
    };
    Ok(gamma * weighted_distance(&image, v, model.weights())?)
}

/// A policy whose value is within `epsilon` of `v_star` in the weighted norm.
///
/// At each state it picks the control with the *largest* `H(x, u, V*)` among
/// those within `ε ν(x) / γ(σ)` of the minimum, so the construction really
/// uses the allowed slack instead of collapsing to the greedy choice.
pub fn epsilon_optimal_policy<M: DpModel + ?Sized>(
    model: &M,
    v_star: &ValueFunction,
    epsilon: f64,
    sigma: f64,
) -> Result<Policy> {
    if !(epsilon > 0.0) {
        return Err(DpError::Domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let gamma = gamma_bound_constant(sigma)?;
    let (fv, _) = apply_optimality_operator(model, v_star)?;
    let nu = model.weights();
    let controls = model.controls();
    let mut choice = Vec::with_capacity(model.n_states());
    for x in 0..model.n_states() {
        let limit = fv[x] + epsilon * nu[x] / gamma;
        let mut pick: Option<(f64, Control)> = None;
        for (slot, &u) in controls.at(x).iter().enumerate() {
            let h = model.h_slot(x, slot, v_star.as_slice());
            if h <= limit && pick.is_none_or(|(best, id)| h > best || (h == best && u < id)) {
                pick = Some((h, u));
            }
        }
        let (_, u) =
            pick.ok_or_else(|| DpError::Internal(format!("no control attains F V* at state {x}")))?;
        choice.push(u);
    }
    Ok(Policy::from_admissible(choice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp_model::{random_mdp, ControlSpace, FiniteMdp};
    use crate::value_space::weighted_norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_model() -> FiniteMdp {
        // g = 1, α = 0.5, self-loop: V_μ = 2
        FiniteMdp::new(
            ControlSpace::new(vec![vec![0]]).unwrap(),
            vec![vec![1.0]],
            vec![vec![vec![1.0]]],
            0.5,
            None,
        )
        .unwrap()
    }

    fn vf(values: &[f64]) -> ValueFunction {
        ValueFunction::new(values.to_vec()).unwrap()
    }

    fn random_value(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> ValueFunction {
        vf(&(0..n)
            .map(|_| rng.gen_range(-scale..scale))
            .collect::<Vec<_>>())
    }

    fn random_policy(rng: &mut ChaCha8Rng, m: &FiniteMdp) -> Policy {
        let c = m.controls();
        Policy::new(
            (0..m.n_states())
                .map(|x| c.at(x)[rng.gen_range(0..c.at(x).len())])
                .collect(),
            c,
        )
        .unwrap()
    }

    #[test]
    fn policy_operator_on_scalar_model() {
        let m = scalar_model();
        let mu = Policy::first(m.controls());
        assert_eq!(
            apply_policy_operator(&m, &mu, &vf(&[0.0])).unwrap(),
            vf(&[1.0])
        );
        assert_eq!(
            apply_policy_operator(&m, &mu, &vf(&[2.0])).unwrap(),
            vf(&[2.0])
        );
        assert_eq!(apply_power(&m, &mu, &vf(&[0.0]), 3).unwrap(), vf(&[1.75]));
        assert_eq!(apply_power(&m, &mu, &vf(&[0.3]), 0).unwrap(), vf(&[0.3]));
    }

    #[test]
    fn power_matches_repeated_application() {
        let m = random_mdp(5, 3, 0.9, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mu = random_policy(&mut rng, &m);
        let v = random_value(&mut rng, 5, 3.0);
        let once = apply_policy_operator(&m, &mu, &v).unwrap();
        assert_eq!(apply_power(&m, &mu, &v, 1).unwrap(), once);
        assert_eq!(
            apply_power(&m, &mu, &v, 2).unwrap(),
            apply_policy_operator(&m, &mu, &once).unwrap()
        );
    }

    #[test]
    fn optimality_operator_picks_cheaper_control() {
        // Controls 0 and 1 share transitions; costs 1 and 2.
        let m = FiniteMdp::new(
            ControlSpace::new(vec![vec![0, 1], vec![0, 1]]).unwrap(),
            vec![vec![1.0, 2.0], vec![1.0, 2.0]],
            vec![vec![vec![0.5, 0.5]; 2], vec![vec![0.5, 0.5]; 2]],
            0.9,
            None,
        )
        .unwrap();
        let (fv, mu) = apply_optimality_operator(&m, &ValueFunction::zeros(2)).unwrap();
        assert_eq!(mu.at(0), 0);
        assert_eq!(fv, vf(&[1.0, 1.0]));
        assert_eq!(
            apply_policy_operator(&m, &mu, &ValueFunction::zeros(2)).unwrap(),
            fv
        );
    }

    #[test]
    fn optimality_ties_pick_lowest_identifier() {
        let m = FiniteMdp::new(
            ControlSpace::new(vec![vec![5, 2, 9]]).unwrap(),
            vec![vec![1.0, 1.0, 1.0]],
            vec![vec![vec![1.0]; 3]],
            0.5,
            None,
        )
        .unwrap();
        let (_, mu) = apply_optimality_operator(&m, &vf(&[0.0])).unwrap();
        assert_eq!(mu.at(0), 2);
    }

    #[test]
    fn singleton_controls_make_f_equal_f_mu() {
        let m = random_mdp(4, 1, 0.7, 2).unwrap();
        let v = vf(&[1.0, -2.0, 0.5, 3.0]);
        let (fv, mu) = apply_optimality_operator(&m, &v).unwrap();
        assert_eq!(fv, apply_policy_operator(&m, &mu, &v).unwrap());
    }

    #[test]
    fn greedy_policy_reproduces_optimality_value_exactly() {
        let m = random_mdp(12, 4, 0.95, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = random_value(&mut rng, 12, 10.0);
            let (fv, mu) = apply_optimality_operator(&m, &v).unwrap();
            assert_eq!(apply_policy_operator(&m, &mu, &v).unwrap(), fv);
        }
    }

    #[test]
    fn lambda_zero_reduces_to_identity_or_policy_operator() {
        let m = random_mdp(5, 2, 0.9, 5).unwrap();
        let mu = Policy::first(m.controls());
        let v = vf(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let power_l = LambdaOperatorConfig {
            lambda: 0.0,
            exponent_convention: ExponentConvention::PowerL,
            ..Default::default()
        };
        assert_eq!(
            apply_lambda_operator(&m, &mu, &v, &power_l).unwrap().value,
            v
        );
        let classical = LambdaOperatorConfig::new(0.0);
        assert_eq!(
            apply_lambda_operator(&m, &mu, &v, &classical)
                .unwrap()
                .value,
            apply_policy_operator(&m, &mu, &v).unwrap()
        );
    }

    #[test]
    fn lambda_operator_fixes_policy_value_under_both_conventions() {
        let m = scalar_model();
        let mu = Policy::first(m.controls());
        let fixed = vf(&[2.0]);
        for conv in [
            ExponentConvention::PowerL,
            ExponentConvention::ClassicalLPlus1,
        ] {
            let cfg = LambdaOperatorConfig {
                lambda: 0.7,
                exponent_convention: conv,
                ..Default::default()
            };
            let out = apply_lambda_operator(&m, &mu, &fixed, &cfg).unwrap();
            assert!((out.value[0] - 2.0).abs() <= cfg.truncation_tol);
        }
    }

    #[test]
    fn lambda_operator_matches_scalar_closed_form() {
        // Scalar: F^{l+1} v = 2 + 0.5^{l+1}(v − 2), so
        // F^λ v = 2 + (v − 2) · 0.5(1−λ)/(1−0.5λ).
        let m = scalar_model();
        let mu = Policy::first(m.controls());
        for &lambda in &[0.1, 0.5, 0.9] {
            for &v0 in &[-3.0, 0.0, 10.0] {
                let cfg = LambdaOperatorConfig::new(lambda);
                let out = apply_lambda_operator(&m, &mu, &vf(&[v0]), &cfg).unwrap();
                let exact = 2.0 + (v0 - 2.0) * 0.5 * (1.0 - lambda) / (1.0 - 0.5 * lambda);
                assert!(
                    (out.value[0] - exact).abs() <= cfg.truncation_tol,
                    "λ={lambda} v0={v0}"
                );
                assert!(!out.truncation_warning);
            }
        }
    }

    #[test]
    fn lambda_operator_cap_sets_warning() {
        let m = scalar_model();
        let mu = Policy::first(m.controls());
        let cfg = LambdaOperatorConfig {
            lambda: 0.9,
            max_terms: 3,
            ..Default::default()
        };
        let out = apply_lambda_operator(&m, &mu, &vf(&[100.0]), &cfg).unwrap();
        assert!(out.truncation_warning);
        assert_eq!(out.terms, 3);
    }

    #[test]
    fn lambda_config_validation() {
        let m = scalar_model();
        let mu = Policy::first(m.controls());
        for cfg in [
            LambdaOperatorConfig::new(1.0),
            LambdaOperatorConfig::new(-0.1),
            LambdaOperatorConfig {
                truncation_tol: 0.0,
                ..Default::default()
            },
            LambdaOperatorConfig {
                max_terms: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                apply_lambda_operator(&m, &mu, &vf(&[0.0]), &cfg),
                Err(DpError::Domain(_))
            ));
        }
    }

    #[test]
    fn ciric_comparison_degenerate_and_substitution() {
        let m = random_mdp(6, 3, 0.9, 8).unwrap();
        let mu = Policy::first(m.controls());
        let op = PolicyOperator::new(&m, &mu).unwrap();
        let nu = m.weights();

        let v = vf(&[1.0, 0.0, -1.0, 2.0, 0.5, 3.0]);
        let same = ciric_comparison(&op, nu, &v, &v).unwrap();
        assert_eq!(same.image, 0.0);
        assert_eq!(same.pair, 0.0);

        // At the fixed point every candidate vanishes and the ratio is undefined.
        let mut fixed = v.clone();
        for _ in 0..2000 {
            fixed = op.apply(&fixed).unwrap();
        }
        let at_fixed = ciric_comparison(&op, nu, &fixed, &fixed).unwrap();
        assert_eq!(at_fixed.max_candidate(), 0.0);
        assert_eq!(at_fixed.ratio(), None);

        let fv = op.apply(&v).unwrap();
        let ffv = op.apply(&fv).unwrap();
        let c = ciric_comparison(&op, nu, &v, &fv).unwrap();
        assert_eq!(c.second_residual, weighted_distance(&fv, &ffv, nu).unwrap());
    }

    #[test]
    fn ciric_ratio_never_exceeds_discount() {
        let m = random_mdp(10, 3, 0.9, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let nu = m.weights();
        let f = OptimalityOperator::new(&m);
        for _ in 0..500 {
            let mu = random_policy(&mut rng, &m);
            let f_mu = PolicyOperator::new(&m, &mu).unwrap();
            let v = random_value(&mut rng, 10, 5.0);
            let w = random_value(&mut rng, 10, 5.0);
            for c in [
                ciric_comparison(&f, nu, &v, &w).unwrap(),
                ciric_comparison(&f_mu, nu, &v, &w).unwrap(),
            ] {
                assert!(c.ratio().unwrap() <= 0.9 + 1e-12);
                assert!(c.ratio_for(ContractionClass::Banach).unwrap() <= 0.9 + 1e-12);
            }
        }
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_bound_constant(0.5).unwrap(), 2.0);
        assert!((gamma_bound_constant(0.25).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((gamma_bound_constant(1e-9).unwrap() - 1.0).abs() < 1e-8);
        assert!(gamma_bound_constant(0.0).is_err());
        assert!(gamma_bound_constant(1.0).is_err());
        assert!(gamma_bound_constant(f64::NAN).is_err());
    }

    #[test]
    fn gamma_second_branch_dominates() {
        for i in 1..1000 {
            let s = i as f64 / 1000.0;
            let first = (2.0 - s) / (2.0 - 2.0 * s);
            let second = 1.0 / (1.0 - s);
            assert!(second >= first);
            assert_eq!(gamma_bound_constant(s).unwrap(), second);
        }
    }

    #[test]
    fn rho_examples() {
        let partial: f64 = (1..=50)
            .map(|l| 0.5 * 0.5f64.powi(l) * 0.9f64.powi(l))
            .sum();
        let rho = rho_modulus(0.5, 0.9).unwrap();
        assert!((rho - 0.5 * 0.45 / 0.55).abs() < 1e-15);
        assert!((rho - partial).abs() < 1e-12);
        assert_eq!(rho_modulus(0.0, 0.9).unwrap(), 0.0);
        assert!(rho_modulus(1.0, 0.5).is_err());
        assert!(rho_modulus(0.5, 1.0).is_err());
        for i in 0..20 {
            for j in 1..20 {
                let r = rho_modulus(i as f64 / 20.0, j as f64 / 20.0).unwrap();
                assert!((0.0..1.0).contains(&r));
            }
        }
    }

    #[test]
    fn certified_bound_examples() {
        let m = scalar_model();
        let bound = certified_error_bound(&m, &vf(&[0.0]), BoundTarget::Optimal, 0.5).unwrap();
        assert_eq!(bound, 2.0);
        assert_eq!(
            certified_error_bound(&m, &vf(&[2.0]), BoundTarget::Optimal, 0.5).unwrap(),
            0.0
        );
        let mu = Policy::first(m.controls());
        assert_eq!(
            certified_error_bound(&m, &vf(&[0.0]), BoundTarget::Policy(&mu), 0.5).unwrap(),
            2.0
        );
        assert!(certified_error_bound(&m, &vf(&[0.0]), BoundTarget::Optimal, 1.5).is_err());
    }

    #[test]
    fn lambda_operator_is_monotone_and_commutes() {
        let m = random_mdp(8, 3, 0.9, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nu = m.weights();
        for &lambda in &[0.3, 0.7] {
            let cfg = LambdaOperatorConfig::new(lambda);
            for _ in 0..30 {
                let mu = random_policy(&mut rng, &m);
                let v = random_value(&mut rng, 8, 4.0);
                let bump: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
                let w = v.add(&vf(&bump)).unwrap();
                let lv = apply_lambda_operator(&m, &mu, &v, &cfg).unwrap().value;
                let lw = apply_lambda_operator(&m, &mu, &w, &cfg).unwrap().value;
                assert!(
                    crate::value_space::leq_with_slack(&lv, &lw, cfg.truncation_tol, nu).unwrap()
                );

                let f_then_l = apply_lambda_operator(
                    &m,
                    &mu,
                    &apply_policy_operator(&m, &mu, &v).unwrap(),
                    &cfg,
                )
                .unwrap()
                .value;
                let l_then_f = apply_policy_operator(&m, &mu, &lv).unwrap();
                assert!(
                    weighted_distance(&f_then_l, &l_then_f, nu).unwrap()
                        <= 2.0 * cfg.truncation_tol
                );
            }
        }
    }

    #[test]
    fn policy_iteration_converges_in_geometric_envelope() {
        let m = random_mdp(10, 3, 0.9, 2).unwrap();
        let mu = Policy::first(m.controls());
        let mut fixed = ValueFunction::zeros(10);
        for _ in 0..3000 {
            fixed = apply_policy_operator(&m, &mu, &fixed).unwrap();
        }
        let v0 = vf(&[5.0; 10]);
        let d0 = weighted_distance(&v0, &fixed, m.weights()).unwrap();
        let mut v = v0;
        for k in 1..60 {
            v = apply_policy_operator(&m, &mu, &v).unwrap();
            let dk = weighted_distance(&v, &fixed, m.weights()).unwrap();
            assert!(dk <= 0.9f64.powi(k) * d0 + 1e-12);
        }
        assert!(
            weighted_norm(
                &fixed
                    .sub(&apply_policy_operator(&m, &mu, &fixed).unwrap())
                    .unwrap(),
                m.weights()
            )
            .unwrap()
                < 1e-12
        );
    }

    #[test]
    fn epsilon_optimal_policy_stays_within_slack() {
        let m = random_mdp(6, 4, 0.8, 17).unwrap();
        let mut v_star = ValueFunction::zeros(6);
        for _ in 0..400 {
            v_star = apply_optimality_operator(&m, &v_star).unwrap().0;
        }
        let (fv, _) = apply_optimality_operator(&m, &v_star).unwrap();
        let eps = 0.5;
        let mu = epsilon_optimal_policy(&m, &v_star, eps, 0.8).unwrap();
        let f_mu = apply_policy_operator(&m, &mu, &v_star).unwrap();
        let gamma = gamma_bound_constant(0.8).unwrap();
        for x in 0..6 {
            assert!(f_mu[x] - fv[x] <= eps / gamma + 1e-12);
        }
        assert!(epsilon_optimal_policy(&m, &v_star, 0.0, 0.8).is_err());
    }
}
