use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance for "sums to one" checks on probability vectors.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Dense real-valued features. Entries are always finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { index });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Copy with `tags` appended (node index, resample index, ...).
    pub fn tagged(&self, tags: &[f64]) -> Self {
        Self(append_tags(&self.0, tags))
    }
}

pub(crate) fn append_tags(x: &[f64], tags: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + tags.len());
    v.extend_from_slice(x);
    v.extend_from_slice(tags);
    v
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(x: FeatureVector) -> Vec<f64> {
        x.0
    }
}

/// Zero-based action index. Displayed one-based, as in log files.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action(pub usize);

impl Action {
    /// From a one-based action number.
    pub fn from_number(number: usize) -> Option<Self> {
        number.checked_sub(1).map(Action)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn number(self) -> usize {
        self.0 + 1
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Binary label, `+1` / `-1`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// At a tree node, `+1` selects the left child.
    pub const LEFT: Label = Label::Positive;
    pub const RIGHT: Label = Label::Negative;

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

/// The logging policy's action distribution for one example.
///
/// Stored in full because the tree reduction needs the probability of the
/// sibling action, not only of the chosen one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Propensity {
    Uniform(usize),
    Explicit(Vec<f64>),
}

impl Propensity {
    pub fn uniform(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::TooFewActions(k));
        }
        Ok(Propensity::Uniform(k))
    }

    pub fn explicit(probs: Vec<f64>) -> Result<Self> {
        let p = Propensity::Explicit(probs);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Propensity::Uniform(k) if *k == 0 => Err(Error::TooFewActions(0)),
            Propensity::Uniform(_) => Ok(()),
            Propensity::Explicit(probs) => {
                if probs.is_empty() {
                    return Err(Error::TooFewActions(0));
                }
                for (action, &value) in probs.iter().enumerate() {
                    if !(value > 0.0) || !value.is_finite() {
                        return Err(Error::NonPositivePropensity { action: action + 1, value });
                    }
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                    return Err(Error::ProbabilitySum(total));
                }
                Ok(())
            }
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Propensity::Uniform(k) => *k,
            Propensity::Explicit(probs) => probs.len(),
        }
    }

    pub fn prob(&self, action: Action) -> f64 {
        match self {
            Propensity::Uniform(k) => 1.0 / *k as f64,
            Propensity::Explicit(probs) => probs[action.0],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.num_actions()).map(|a| self.prob(Action(a))).collect()
    }

    /// Draw an action by inverse CDF from one uniform variate `u ∈ [0,1)`.
    pub fn sample_with(&self, u: f64) -> Action {
        let k = self.num_actions();
        if let Propensity::Uniform(_) = self {
            return Action(((u * k as f64) as usize).min(k - 1));
        }
        let mut acc = 0.0;
        for a in 0..k {
            acc += self.prob(Action(a));
            if u < acc {
                return Action(a);
            }
        }
        Action(k - 1)
    }
}

/// One logged interaction: features, chosen action, its reward, and the
/// logging distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialLabelExample {
    pub x: FeatureVector,
    pub action: Action,
    pub reward: f64,
    pub propensity: Propensity,
}

impl PartialLabelExample {
    pub fn new(x: FeatureVector, action: Action, reward: f64, propensity: Propensity) -> Result<Self> {
        let e = Self { x, action, reward, propensity };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.reward) {
            return Err(Error::RewardOutOfRange(self.reward));
        }
        self.propensity.validate()?;
        let k = self.num_actions();
        if self.action.0 >= k {
            return Err(Error::ActionOutOfRange { action: self.action.number(), k });
        }
        Ok(())
    }

    pub fn num_actions(&self) -> usize {
        self.propensity.num_actions()
    }

    /// `p(a)` for the logged action.
    pub fn chosen_propensity(&self) -> f64 {
        self.propensity.prob(self.action)
    }
}

/// Importance-weighted binary example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedBinaryExample {
    pub x: FeatureVector,
    pub label: Label,
    pub weight: f64,
}

impl WeightedBinaryExample {
    pub fn new(x: FeatureVector, label: Label, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidWeight(weight));
        }
        Ok(Self { x, label, weight })
    }
}

/// Unweighted binary example, the input of a [`crate::BinaryLearner`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryExample {
    pub x: FeatureVector,
    pub label: Label,
}

/// Full reward vector over `k` actions, entries in `[0,1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardVector(Vec<f64>);

impl RewardVector {
    pub fn new(rewards: Vec<f64>) -> Result<Self> {
        if let Some(&r) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::RewardOutOfRange(r));
        }
        Ok(Self(rewards))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, action: Action) -> f64 {
        self.0[action.0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Anything that maps features to an action.
pub trait Policy {
    fn choose(&self, x: &[f64]) -> Action;
}

impl<F> Policy for F
where
    F: Fn(&[f64]) -> Action,
{
    fn choose(&self, x: &[f64]) -> Action {
        self(x)
    }
}
