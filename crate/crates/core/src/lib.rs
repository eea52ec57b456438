//! Offset Tree reductions from partial-label (contextual bandit) learning to
//! binary classification.
//!
//! The crate is `no_std` and needs only `alloc`. It contains the reductions
//! themselves ([`binary_offset`], [`offset_tree`]), the comparison reductions in
//! [`baselines`], the rejection-sampling machinery in [`costing`], a handful of
//! base learners, an exact finite-support evaluator ([`exact`]) used to check
//! regret transforms, and the simulation harness used by the experiments.
//!
//! Actions are zero-based internally ([`Action`]) and printed one-based.
//! Binary labels are [`Label::Positive`] / [`Label::Negative`]; at a tree node
//! `Positive` means "left child wins".

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod binary_offset;
pub mod costing;
mod error;
pub mod exact;
pub mod harness;
pub mod learners;
mod linalg;
pub mod offset_tree;
pub mod seed;
pub mod theorems;
mod types;

pub use error::Error;
pub use learners::{BinaryClassifier, BinaryLearner, RegressionLearner, Regressor};
pub use types::{
    Action, BinaryExample, FeatureVector, Label, PartialLabelExample, Policy, Propensity, RewardVector,
    WeightedBinaryExample, PROBABILITY_TOLERANCE,
};

pub type Result<T, E = Error> = core::result::Result<T, E>;
