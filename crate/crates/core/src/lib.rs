//! Abstract dynamic programming over weighted sup-norm value spaces, for
//! Bellman operators that are only weak (Ćirić-type) contractions, together
//! with randomized λ-policy iteration and independent oracle solvers.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bellman_ops;
pub mod contraction_lab;
pub mod dp_model;
pub mod error;
pub mod lambda_pir;
pub mod oracle_solvers;
pub mod value_space;

pub use bellman_ops::{
    apply_lambda_operator, apply_optimality_operator, apply_policy_operator, apply_power,
    certified_error_bound, ciric_comparison, epsilon_optimal_policy, gamma_bound_constant,
    lambda_operator_modulus, rho_modulus, BoundTarget, CiricComparison, ContractionClass,
    ExponentConvention, LambdaApplication, LambdaOperator, LambdaOperatorConfig,
    OptimalityOperator, PolicyOperator, ValueOperator,
};
pub use dp_model::{
    load_model, load_model_str, random_mdp, Control, ControlSpace, DpModel, FiniteMdp,
    ModelDocument, Policy,
};
pub use error::{DpError, Result};
pub use lambda_pir::{
    pir_step, run_batch, run_pir, Branch, PSchedule, PirConfig, PirRecord, PirTrace,
    RunBatchSummary,
};
pub use value_space::{
    pointwise_leq, pointwise_lt, shift_by_weight, weighted_distance, weighted_norm, StateSpace,
    ValueFunction, WeightFunction,
};
