//! The abstract mapping `H(x, u, V)` and its finite discounted-MDP instance
//! `H(x, u, V) = g(x, u) + α Σ_y p(y | x, u) V(y)`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::value_space::{check_len, StateSpace, ValueFunction, WeightFunction};

/// Control identifier.
pub type Control = u32;

/// Tolerance on transition-row sums when loading or constructing a model.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Per-state admissible control lists `U(x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlSpace {
    per_state: Vec<Vec<Control>>,
}

impl ControlSpace {
    pub fn new(per_state: Vec<Vec<Control>>) -> Result<Self> {
        if per_state.is_empty() {
            return Err(DpError::Validation(
                "control space must cover at least one state".into(),
            ));
        }
        for (x, controls) in per_state.iter().enumerate() {
            if controls.is_empty() {
                return Err(DpError::Validation(format!(
                    "state {x} has no admissible control"
                )));
            }
            for (i, u) in controls.iter().enumerate() {
                if controls[..i].contains(u) {
                    return Err(DpError::Validation(format!(
                        "control {u} listed twice at state {x}"
                    )));
                }
            }
        }
        Ok(Self { per_state })
    }

    /// Controls `0..n_controls` at every state.
    pub fn full(n_states: usize, n_controls: usize) -> Result<Self> {
        Self::new(vec![(0..n_controls as Control).collect(); n_states])
    }

    pub fn n_states(&self) -> usize {
        self.per_state.len()
    }

    pub fn at(&self, x: usize) -> &[Control] {
        &self.per_state[x]
    }

    /// Position of `u` within `U(x)`.
    pub fn slot(&self, x: usize, u: Control) -> Option<usize> {
        self.per_state.get(x)?.iter().position(|&c| c == u)
    }

    /// `Π_x |U(x)|`, saturating.
    pub fn policy_count(&self) -> u128 {
        self.per_state
            .iter()
            .fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128))
    }
}

/// A stationary policy `μ` with `μ(x) ∈ U(x)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    choice: Vec<Control>,
}

impl Policy {
    pub fn new(choice: Vec<Control>, controls: &ControlSpace) -> Result<Self> {
        check_len(controls.n_states(), choice.len())?;
        for (x, &u) in choice.iter().enumerate() {
            if controls.slot(x, u).is_none() {
                return Err(DpError::Admissibility {
                    state: x,
                    control: u,
                });
            }
        }
        Ok(Self { choice })
    }

    /// Caller guarantees admissibility.
    pub(crate) fn from_admissible(choice: Vec<Control>) -> Self {
        Self { choice }
    }

    /// First listed control at every state.
    pub fn first(controls: &ControlSpace) -> Self {
        Self {
            choice: (0..controls.n_states())
                .map(|x| controls.at(x)[0])
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }

    pub fn at(&self, x: usize) -> Control {
        self.choice[x]
    }

    pub fn as_slice(&self) -> &[Control] {
        &self.choice
    }

    /// Slot of each chosen control within its state's control list.
    pub fn slots(&self, controls: &ControlSpace) -> Result<Vec<usize>> {
        check_len(controls.n_states(), self.choice.len())?;
        self.choice
            .iter()
            .enumerate()
            .map(|(x, &u)| {
                controls.slot(x, u).ok_or(DpError::Admissibility {
                    state: x,
                    control: u,
                })
            })
            .collect()
    }
}

/// The evaluation contract shared by every model instance.
///
/// Implementations must be monotone in `V` and keep `F_μ V`, `F V` finite for
/// finite `V`. Control lists are finite, so the per-state infimum is attained.
pub trait DpModel: Sync {
    fn controls(&self) -> &ControlSpace;

    fn weights(&self) -> &WeightFunction;

    /// `H(x, u_slot, v)` where `u_slot` indexes `U(x)`; inputs are pre-validated.
    fn h_slot(&self, x: usize, slot: usize, v: &[f64]) -> f64;

    /// Known contraction modulus of `F_μ` and `F` in the weighted norm.
    fn contraction_modulus(&self) -> f64;

    fn state_space(&self) -> StateSpace {
        StateSpace::new(self.controls().n_states()).expect("control space is nonempty")
    }

    fn n_states(&self) -> usize {
        self.controls().n_states()
    }

    fn evaluate_h(&self, x: usize, u: Control, v: &ValueFunction) -> Result<f64> {
        check_len(self.n_states(), v.len())?;
        let slot = self.controls().slot(x, u).ok_or(DpError::Admissibility {
            state: x,
            control: u,
        })?;
        Ok(self.h_slot(x, slot, v.as_slice()))
    }
}

/// Finite discounted MDP with known costs and transition rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    controls: ControlSpace,
    discount: f64,
    weights: WeightFunction,
    /// `cost[x][slot]`
    cost: Vec<Vec<f64>>,
    /// `transition[x][slot][y]`
    transition: Vec<Vec<Vec<f64>>>,
    modulus: f64,
}

impl FiniteMdp {
    pub fn new(
        controls: ControlSpace,
        cost: Vec<Vec<f64>>,
        transition: Vec<Vec<Vec<f64>>>,
        discount: f64,
        weights: Option<WeightFunction>,
    ) -> Result<Self> {
        let n = controls.n_states();
        if !(discount > 0.0 && discount < 1.0) {
            return Err(DpError::Validation(format!(
                "discount must lie in (0, 1), got {discount}"
            )));
        }
        let weights = weights.unwrap_or_else(|| WeightFunction::uniform(n));
        if weights.len() != n {
            return Err(DpError::Validation(format!(
                "expected {n} weights, found {}",
                weights.len()
            )));
        }
        if cost.len() != n || transition.len() != n {
            return Err(DpError::Validation(
                "cost/transition tables must cover every state".into(),
            ));
        }
        for x in 0..n {
            let us = controls.at(x);
            if cost[x].len() != us.len() || transition[x].len() != us.len() {
                return Err(DpError::Validation(format!(
                    "state {x}: tables do not match U({x})"
                )));
            }
            for (slot, &u) in us.iter().enumerate() {
                if !cost[x][slot].is_finite() {
                    return Err(DpError::Validation(format!("cost ({x},{u}) is not finite")));
                }
                validate_row(x, u, n, &transition[x][slot])?;
            }
        }
        let modulus = weighted_modulus(discount, &weights, &transition);
        Ok(Self {
            controls,
            discount,
            weights,
            cost,
            transition,
            modulus,
        })
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn cost(&self, x: usize, slot: usize) -> f64 {
        self.cost[x][slot]
    }

    pub fn transition_row(&self, x: usize, slot: usize) -> &[f64] {
        &self.transition[x][slot]
    }

    pub fn to_document(&self) -> ModelDocument {
        let mut cost = BTreeMap::new();
        let mut transition = BTreeMap::new();
        for x in 0..self.n_states() {
            for (slot, &u) in self.controls.at(x).iter().enumerate() {
                cost.insert(format!("{x},{u}"), self.cost[x][slot]);
                transition.insert(format!("{x},{u}"), self.transition[x][slot].clone());
            }
        }
        ModelDocument {
            n_states: self.n_states(),
            discount: self.discount,
            weights: Some(self.weights.as_slice().to_vec()),
            controls: self.controls.per_state.clone(),
            cost,
            transition,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }
}

fn validate_row(x: usize, u: Control, n: usize, row: &[f64]) -> Result<()> {
    if row.len() != n {
        return Err(DpError::Validation(format!(
            "transition row ({x},{u}) has length {}, expected {n}",
            row.len()
        )));
    }
    if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(DpError::Validation(format!(
            "transition row ({x},{u}) has invalid entry {p}"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(DpError::Validation(format!(
            "transition row ({x},{u}) sums to {sum}, not 1"
        )));
    }
    Ok(())
}

/// `α · max_{x,u} Σ_y p(y|x,u) ν(y) / ν(x)`, which is exactly `α` for constant ν.
fn weighted_modulus(discount: f64, weights: &WeightFunction, transition: &[Vec<Vec<f64>>]) -> f64 {
    if weights.is_uniform() {
        return discount;
    }
    let nu = weights.as_slice();
    let worst = transition
        .iter()
        .enumerate()
        .flat_map(|(x, rows)| {
            rows.iter()
                .map(move |row| row.iter().zip(nu).map(|(p, w)| p * w).sum::<f64>() / nu[x])
        })
        .fold(0.0, f64::max);
    discount * worst
}

impl DpModel for FiniteMdp {
    fn controls(&self) -> &ControlSpace {
        &self.controls
    }

    fn weights(&self) -> &WeightFunction {
        &self.weights
    }

    fn h_slot(&self, x: usize, slot: usize, v: &[f64]) -> f64 {
        let expected: f64 = self.transition[x][slot]
            .iter()
            .zip(v)
            .map(|(p, vy)| p * vy)
            .sum();
        self.cost[x][slot] + self.discount * expected
    }

    fn contraction_modulus(&self) -> f64 {
        self.modulus
    }
}

/// On-disk model document. Keys of `cost` and `transition` are `"state,control"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub n_states: usize,
    pub discount: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub controls: Vec<Vec<Control>>,
    pub cost: BTreeMap<String, f64>,
    pub transition: BTreeMap<String, Vec<f64>>,
}

impl ModelDocument {
    pub fn into_model(self) -> Result<FiniteMdp> {
        let n = self.n_states;
        StateSpace::new(n)?;
        if self.controls.len() != n {
            return Err(DpError::Validation(format!(
                "controls lists {} states, expected {n}",
                self.controls.len()
            )));
        }
        let controls = ControlSpace::new(self.controls)?;
        let weights = self.weights.map(WeightFunction::new).transpose()?;

        let mut seen = 0usize;
        let mut cost = Vec::with_capacity(n);
        let mut transition = Vec::with_capacity(n);
        for x in 0..n {
            let mut g = Vec::new();
            let mut rows = Vec::new();
            for &u in controls.at(x) {
                let key = format!("{x},{u}");
                let c = *self
                    .cost
                    .get(&key)
                    .ok_or_else(|| DpError::Validation(format!("missing cost for ({x},{u})")))?;
                let row = self.transition.get(&key).ok_or_else(|| {
                    DpError::Validation(format!("missing transition for ({x},{u})"))
                })?;
                g.push(c);
                rows.push(row.clone());
                seen += 1;
            }
            cost.push(g);
            transition.push(rows);
        }
        if self.cost.len() != seen || self.transition.len() != seen {
            let extra = self
                .cost
                .keys()
                .chain(self.transition.keys())
                .find(|k| !is_admissible_key(k, &controls))
                .cloned()
                .unwrap_or_default();
            return Err(DpError::Validation(format!(
                "entry for non-admissible pair \"{extra}\""
            )));
        }
        FiniteMdp::new(controls, cost, transition, self.discount, weights)
    }
}

fn is_admissible_key(key: &str, controls: &ControlSpace) -> bool {
    let Some((x, u)) = key.split_once(',') else {
        return false;
    };
    match (x.trim().parse::<usize>(), u.trim().parse::<Control>()) {
        (Ok(x), Ok(u)) => format!("{x},{u}") == key && controls.slot(x, u).is_some(),
        _ => false,
    }
}

pub fn load_model_str(text: &str) -> Result<FiniteMdp> {
    let doc: ModelDocument = serde_json::from_str(text)?;
    doc.into_model()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FiniteMdp> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| DpError::Parse(format!("cannot read {}: {e}", path.display())))?;
    load_model_str(&text)
}

/// Seeded random MDP: costs uniform in `[0, 1]`, rows uniform on the simplex.
pub fn random_mdp(
    n_states: usize,
    n_controls: usize,
    discount: f64,
    seed: u64,
) -> Result<FiniteMdp> {
    if n_states == 0 || n_controls == 0 {
        return Err(DpError::Validation(
            "need at least one state and one control".into(),
        ));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(DpError::Validation(format!(
            "discount must lie in (0, 1), got {discount}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cost = Vec::with_capacity(n_states);
    let mut transition = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let mut g = Vec::with_capacity(n_controls);
        let mut rows = Vec::with_capacity(n_controls);
        for _ in 0..n_controls {
            g.push(rng.gen::<f64>());
            // Normalized exponentials are uniform on the simplex.
            let raw: Vec<f64> = (0..n_states)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let total: f64 = raw.iter().sum();
            rows.push(raw.into_iter().map(|e| e / total).collect());
        }
        cost.push(g);
        transition.push(rows);
    }
    FiniteMdp::new(
        ControlSpace::full(n_states, n_controls)?,
        cost,
        transition,
        discount,
        None,
    )
}
