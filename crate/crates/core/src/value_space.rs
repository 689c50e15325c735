//! Bounded value functions over a finite state set, with the weighted sup-norm
//! `‖V‖ = max_x |V(x)| / ν(x)` and the pointwise order.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};

/// States are the indices `0..n_states`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    n_states: usize,
}

impl StateSpace {
    pub fn new(n_states: usize) -> Result<Self> {
        if n_states == 0 {
            return Err(DpError::Validation(
                "state space must contain at least one state".into(),
            ));
        }
        Ok(Self { n_states })
    }

    pub fn len(&self) -> usize {
        self.n_states
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn states(&self) -> std::ops::Range<usize> {
        0..self.n_states
    }
}

/// Strictly positive weights ν defining the norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightFunction {
    weights: Vec<f64>,
}

impl WeightFunction {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(DpError::Validation(
                "weight function must be nonempty".into(),
            ));
        }
        for (state, &value) in weights.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(DpError::InvalidWeight { state, value });
            }
        }
        Ok(Self { weights })
    }

    /// ν ≡ 1, recovering the ordinary sup-norm.
    pub fn uniform(n_states: usize) -> Self {
        Self {
            weights: vec![1.0; n_states.max(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.iter().all(|&w| w == self.weights[0])
    }
}

impl Index<usize> for WeightFunction {
    type Output = f64;

    fn index(&self, x: usize) -> &f64 {
        &self.weights[x]
    }
}

/// An element of B(X): one finite real per state.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValueFunction {
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(DpError::Validation(
                "value function must be nonempty".into(),
            ));
        }
        if let Some((state, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(DpError::NonFinite { state, value });
        }
        Ok(Self { values })
    }

    /// For results of arithmetic on already-validated inputs.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn zeros(n_states: usize) -> Self {
        Self {
            values: vec![0.0; n_states],
        }
    }

    pub fn constant(n_states: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n_states])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| c * v).collect())
    }

    pub fn add(&self, other: &ValueFunction) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &ValueFunction) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &ValueFunction) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| f64::max(acc, (a - b).abs())))
    }
}

impl Index<usize> for ValueFunction {
    type Output = f64;

    fn index(&self, x: usize) -> &f64 {
        &self.values[x]
    }
}

impl<'de> Deserialize<'de> for ValueFunction {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        ValueFunction::new(values).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(DpError::Dimension { expected, found })
    }
}

pub fn weighted_norm(v: &ValueFunction, nu: &WeightFunction) -> Result<f64> {
    check_len(nu.len(), v.len())?;
    Ok(v.iter()
        .zip(nu.as_slice())
        .fold(0.0, |acc, (x, w)| f64::max(acc, x.abs() / w)))
}

/// `‖v − w‖` without materializing the difference.
pub fn weighted_distance(v: &ValueFunction, w: &ValueFunction, nu: &WeightFunction) -> Result<f64> {
    check_len(v.len(), w.len())?;
    check_len(nu.len(), v.len())?;
    Ok(v.iter()
        .zip(w.iter())
        .zip(nu.as_slice())
        .fold(0.0, |acc, ((a, b), n)| f64::max(acc, (a - b).abs() / n)))
}

pub fn pointwise_leq(v: &ValueFunction, w: &ValueFunction) -> Result<bool> {
    check_len(v.len(), w.len())?;
    Ok(v.iter().zip(w.iter()).all(|(a, b)| a <= b))
}

pub fn pointwise_lt(v: &ValueFunction, w: &ValueFunction) -> Result<bool> {
    check_len(v.len(), w.len())?;
    Ok(v.iter().zip(w.iter()).all(|(a, b)| a < b))
}

/// States where `v(x) < w(x)` fails.
pub fn strict_order_failures(v: &ValueFunction, w: &ValueFunction) -> Result<Vec<usize>> {
    check_len(v.len(), w.len())?;
    Ok(v.iter()
        .zip(w.iter())
        .enumerate()
        .filter(|(_, (a, b))| !(a < b))
        .map(|(x, _)| x)
        .collect())
}

/// `v ≤ w + slack·ν` at every state.
pub fn leq_with_slack(
    v: &ValueFunction,
    w: &ValueFunction,
    slack: f64,
    nu: &WeightFunction,
) -> Result<bool> {
    check_len(v.len(), w.len())?;
    check_len(nu.len(), v.len())?;
    Ok(v.iter()
        .zip(w.iter())
        .zip(nu.as_slice())
        .all(|((a, b), n)| *a <= b + slack * n))
}

/// `x ↦ v(x) + c·ν(x)`.
pub fn shift_by_weight(v: &ValueFunction, c: f64, nu: &WeightFunction) -> Result<ValueFunction> {
    check_len(nu.len(), v.len())?;
    ValueFunction::new(
        v.iter()
            .zip(nu.as_slice())
            .map(|(x, w)| x + c * w)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vf(values: &[f64]) -> ValueFunction {
        ValueFunction::new(values.to_vec()).unwrap()
    }

    fn nu(values: &[f64]) -> WeightFunction {
        WeightFunction::new(values.to_vec()).unwrap()
    }

    #[test]
    fn norm_examples() {
        assert_eq!(
            weighted_norm(&vf(&[1.0, -2.0, 3.0]), &nu(&[1.0, 1.0, 1.0])).unwrap(),
            3.0
        );
        assert_eq!(
            weighted_norm(&vf(&[2.0, 4.0]), &nu(&[1.0, 2.0])).unwrap(),
            2.0
        );
        assert_eq!(
            weighted_norm(&vf(&[0.0, 0.0, 0.0]), &nu(&[1.0, 5.0, 9.0])).unwrap(),
            0.0
        );
    }

    #[test]
    fn distance_examples() {
        let ones = nu(&[1.0, 1.0]);
        assert_eq!(
            weighted_distance(&vf(&[1.0, 1.0]), &vf(&[1.0, 1.0]), &nu(&[3.0, 0.5])).unwrap(),
            0.0
        );
        assert_eq!(
            weighted_distance(&vf(&[3.0, 0.0]), &vf(&[0.0, 0.0]), &ones).unwrap(),
            3.0
        );
        assert_eq!(
            weighted_distance(&vf(&[1.0, 0.0]), &vf(&[0.0, 2.0]), &nu(&[1.0, 2.0])).unwrap(),
            1.0
        );
    }

    #[test]
    fn order_examples() {
        assert!(pointwise_leq(&vf(&[0.0, 0.0]), &vf(&[0.0, 1.0])).unwrap());
        assert!(!pointwise_lt(&vf(&[0.0, 0.0]), &vf(&[0.0, 1.0])).unwrap());
        assert!(pointwise_lt(&vf(&[1.0, 2.0]), &vf(&[2.0, 3.0])).unwrap());
        assert!(!pointwise_leq(&vf(&[1.0, 0.0]), &vf(&[0.0, 1.0])).unwrap());
        assert_eq!(
            strict_order_failures(&vf(&[0.0, 0.0]), &vf(&[0.0, 1.0])).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn shift_examples() {
        let ones = nu(&[1.0, 1.0]);
        assert_eq!(
            shift_by_weight(&vf(&[1.0, 1.0]), 0.0, &ones).unwrap(),
            vf(&[1.0, 1.0])
        );
        assert_eq!(
            shift_by_weight(&vf(&[0.0, 0.0]), 2.0, &nu(&[1.0, 3.0])).unwrap(),
            vf(&[2.0, 6.0])
        );
        assert_eq!(
            shift_by_weight(&vf(&[1.0, -1.0]), -1.0, &ones).unwrap(),
            vf(&[0.0, -2.0])
        );
    }

    #[test]
    fn dimension_errors() {
        let err = weighted_norm(&vf(&[1.0, 2.0]), &nu(&[1.0])).unwrap_err();
        assert_eq!(
            err,
            DpError::Dimension {
                expected: 1,
                found: 2
            }
        );
        assert!(weighted_distance(&vf(&[1.0]), &vf(&[1.0, 2.0]), &nu(&[1.0])).is_err());
        assert!(pointwise_leq(&vf(&[1.0]), &vf(&[1.0, 2.0])).is_err());
        assert!(pointwise_lt(&vf(&[1.0]), &vf(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn construction_rejects_bad_entries() {
        assert!(matches!(
            ValueFunction::new(vec![1.0, f64::NAN]),
            Err(DpError::NonFinite { state: 1, .. })
        ));
        assert!(ValueFunction::new(vec![f64::INFINITY]).is_err());
        assert!(ValueFunction::new(vec![]).is_err());
        assert!(matches!(
            WeightFunction::new(vec![1.0, 0.0]),
            Err(DpError::InvalidWeight { state: 1, .. })
        ));
        assert!(WeightFunction::new(vec![-1.0]).is_err());
        assert!(StateSpace::new(0).is_err());
    }

    fn vec_and_weights() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(-1e3..1e3f64, n),
                prop::collection::vec(-1e3..1e3f64, n),
                prop::collection::vec(0.01..100.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn norm_axioms((a, b, w) in vec_and_weights(), c in -50.0..50.0f64) {
            let (v, u, nu) = (vf(&a), vf(&b), nu(&w));
            let nv = weighted_norm(&v, &nu).unwrap();
            prop_assert!(nv >= 0.0);
            prop_assert_eq!(nv == 0.0, v.iter().all(|x| *x == 0.0));
            let scaled = weighted_norm(&v.scale(c).unwrap(), &nu).unwrap();
            prop_assert!((scaled - c.abs() * nv).abs() <= 1e-12 * (1.0 + scaled));
            let sum = weighted_norm(&v.add(&u).unwrap(), &nu).unwrap();
            let nu_norm = weighted_norm(&u, &nu).unwrap();
            prop_assert!(sum <= nv + nu_norm + 1e-9);
        }

        #[test]
        fn distance_is_norm_of_difference((a, b, w) in vec_and_weights()) {
            let (v, u, nu) = (vf(&a), vf(&b), nu(&w));
            let d = weighted_distance(&v, &u, &nu).unwrap();
            prop_assert_eq!(d, weighted_norm(&v.sub(&u).unwrap(), &nu).unwrap());
            prop_assert_eq!(d, weighted_distance(&u, &v, &nu).unwrap());
        }

        #[test]
        fn norm_convergence_is_pointwise((a, b, w) in vec_and_weights(), k in 1u32..40) {
            // V_k = V + 2^{-k} D: the norm bounds every entrywise deviation by max ν.
            let (v, d, nu) = (vf(&a), vf(&b), nu(&w));
            let vk = v.add(&d.scale(0.5f64.powi(k as i32)).unwrap()).unwrap();
            let dist = weighted_distance(&vk, &v, &nu).unwrap();
            let max_w = w.iter().cloned().fold(0.0, f64::max);
            prop_assert!(vk.max_abs_diff(&v).unwrap() <= dist * max_w * (1.0 + 1e-12) + 1e-300);
        }
    }
}
