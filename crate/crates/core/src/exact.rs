//! Exact evaluation on finite-support problems.
//!
//! An [`ExactProblem`] lists every context with its probability and its
//! distribution over reward vectors, so policy values, regrets and the
//! distributions induced by the reductions can be computed by enumeration
//! instead of sampling. This is the oracle the regret tests are built on.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{
    Action, BinaryClassifier, Error, FeatureVector, Label, PartialLabelExample, Policy, Propensity, Result,
    RewardVector, PROBABILITY_TOLERANCE,
};

/// One support point of `D`: a context and its reward-vector distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub prob: f64,
    pub x: FeatureVector,
    pub outcomes: Vec<(f64, RewardVector)>,
}

impl Context {
    /// `E[r_a | x]` for every action.
    pub fn mean_rewards(&self) -> Vec<f64> {
        let k = self.outcomes.first().map_or(0, |(_, r)| r.len());
        let mut means = alloc::vec![0.0; k];
        for (q, r) in &self.outcomes {
            for (m, v) in means.iter_mut().zip(r.as_slice()) {
                *m += q * v;
            }
        }
        means
    }
}

/// Finite-support partial-label problem `D` together with the logging
/// distribution `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactProblem {
    k: usize,
    contexts: Vec<Context>,
    propensity: Propensity,
}

fn check_sum(total: f64) -> Result<()> {
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::ProbabilitySum(total));
    }
    Ok(())
}

impl ExactProblem {
    pub fn new(k: usize, contexts: Vec<Context>, propensity: Propensity) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewActions(k));
        }
        propensity.validate()?;
        if propensity.num_actions() != k {
            return Err(Error::LengthMismatch { expected: k, got: propensity.num_actions() });
        }
        check_sum(contexts.iter().map(|c| c.prob).sum())?;
        for c in &contexts {
            if !(c.prob >= 0.0) {
                return Err(Error::ProbabilitySum(c.prob));
            }
            check_sum(c.outcomes.iter().map(|(q, _)| *q).sum())?;
            for (q, r) in &c.outcomes {
                if !(*q >= 0.0) {
                    return Err(Error::ProbabilitySum(*q));
                }
                if r.len() != k {
                    return Err(Error::LengthMismatch { expected: k, got: r.len() });
                }
            }
        }
        Ok(Self { k, contexts, propensity })
    }

    /// Contexts with deterministic rewards and equal probability.
    pub fn deterministic(k: usize, points: Vec<(FeatureVector, RewardVector)>, propensity: Propensity) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::Degenerate("no contexts"));
        }
        let contexts = points
            .into_iter()
            .map(|(x, r)| Context { prob: 1.0 / n as f64, x, outcomes: alloc::vec![(1.0, r)] })
            .collect();
        Self::new(k, contexts, propensity)
    }

    pub fn num_actions(&self) -> usize {
        self.k
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn propensity(&self) -> &Propensity {
        &self.propensity
    }

    /// Same `D` under a different logging distribution.
    pub fn with_propensity(&self, propensity: Propensity) -> Result<Self> {
        Self::new(self.k, self.contexts.clone(), propensity)
    }

    /// Conditional-mean maximiser for each context, ties to the smallest index.
    pub fn best_actions(&self) -> Vec<Action> {
        self.contexts.iter().map(|c| argmax(&c.mean_rewards())).collect()
    }

    /// Value of the best deterministic policy.
    pub fn optimal_value(&self) -> f64 {
        self.contexts.iter().map(|c| c.prob * c.mean_rewards().into_iter().fold(f64::NEG_INFINITY, f64::max)).sum()
    }
}

/// Smallest index attaining the maximum.
pub fn argmax(values: &[f64]) -> Action {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    Action(best)
}

/// `η(π, D) = E[r_{π(x)}]`.
pub fn policy_value<P: Policy + ?Sized>(policy: &P, problem: &ExactProblem) -> f64 {
    problem
        .contexts
        .iter()
        .map(|c| {
            let a = policy.choose(&c.x);
            c.prob * c.outcomes.iter().map(|(q, r)| q * r.get(a)).sum::<f64>()
        })
        .sum()
}

/// `max_π' η(π', D) − η(π, D)`, accumulated context by context.
pub fn policy_regret<P: Policy + ?Sized>(policy: &P, problem: &ExactProblem) -> f64 {
    problem
        .contexts
        .iter()
        .map(|c| {
            let means = c.mean_rewards();
            let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            c.prob * (best - means[policy.choose(&c.x).0])
        })
        .sum()
}

/// Inverse-propensity estimate of `η(π, ·)` from a logged sample.
pub fn estimate_value_ips<P: Policy + ?Sized>(policy: &P, log: &[PartialLabelExample]) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::Degenerate("empty log"));
    }
    let mut total = 0.0;
    for e in log {
        let p = e.chosen_propensity();
        if !(p > 0.0) {
            return Err(Error::NonPositivePropensity { action: e.action.number(), value: p });
        }
        if policy.choose(&e.x) == e.action {
            total += e.reward / p;
        }
    }
    Ok(total / log.len() as f64)
}

/// Grouping key for "the same point of X".
pub(crate) fn point_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect()
}

/// One atom of an importance-weighted binary distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPoint {
    pub mass: f64,
    pub x: FeatureVector,
    pub label: Label,
    pub weight: f64,
}

/// Finite distribution `P` over `X × {±1} × [0, ∞)`. Masses sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedBinaryDistribution {
    points: Vec<WeightedPoint>,
}

impl WeightedBinaryDistribution {
    pub fn new(points: Vec<WeightedPoint>) -> Result<Self> {
        for p in &points {
            if !(p.mass >= 0.0) {
                return Err(Error::ProbabilitySum(p.mass));
            }
            if !(p.weight >= 0.0) || !p.weight.is_finite() {
                return Err(Error::InvalidWeight(p.weight));
            }
        }
        check_sum(points.iter().map(|p| p.mass).sum())?;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[WeightedPoint] {
        &self.points
    }

    /// `w̄ = E_P[w]`.
    pub fn mean_weight(&self) -> f64 {
        self.points.iter().map(|p| p.mass * p.weight).sum()
    }

    /// `E_P[w · 1(c(x) ≠ y)]`.
    pub fn weighted_error<C: BinaryClassifier + ?Sized>(&self, c: &C) -> f64 {
        self.points.iter().filter(|p| c.predict(&p.x) != p.label).map(|p| p.mass * p.weight).sum()
    }

    /// Smallest importance-weighted loss over all classifiers on the support.
    pub fn min_weighted_error(&self) -> f64 {
        min_error(self.points.iter().map(|p| (&p.x[..], p.label, p.mass * p.weight)))
    }

    pub fn weighted_regret<C: BinaryClassifier + ?Sized>(&self, c: &C) -> f64 {
        self.weighted_error(c) - self.min_weighted_error()
    }
}

/// One atom of an unweighted binary distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryPoint {
    pub mass: f64,
    pub x: FeatureVector,
    pub label: Label,
}

/// Finite distribution `Q` over `X × {±1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryDistribution {
    points: Vec<BinaryPoint>,
}

impl BinaryDistribution {
    pub fn new(points: Vec<BinaryPoint>) -> Result<Self> {
        check_sum(points.iter().map(|p| p.mass).sum())?;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[BinaryPoint] {
        &self.points
    }

    /// `e(c, Q)`.
    pub fn error_rate<C: BinaryClassifier + ?Sized>(&self, c: &C) -> f64 {
        self.points.iter().filter(|p| c.predict(&p.x) != p.label).map(|p| p.mass).sum()
    }

    /// `min_c e(c, Q)` over every classifier on the support.
    pub fn bayes_error(&self) -> f64 {
        min_error(self.points.iter().map(|p| (&p.x[..], p.label, p.mass)))
    }

    /// `reg_e(c, Q)`.
    pub fn regret<C: BinaryClassifier + ?Sized>(&self, c: &C) -> f64 {
        self.error_rate(c) - self.bayes_error()
    }

    /// Total mass per `(x, label)`.
    pub fn aggregated(&self) -> BTreeMap<(Vec<u64>, Label), f64> {
        let mut out = BTreeMap::new();
        for p in &self.points {
            *out.entry((point_key(&p.x), p.label)).or_insert(0.0) += p.mass;
        }
        out
    }

    /// Bayes-optimal label per point, ties to `+1`.
    pub fn bayes_labels(&self) -> BTreeMap<Vec<u64>, Label> {
        let mut score: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
        for p in &self.points {
            *score.entry(point_key(&p.x)).or_insert(0.0) += p.label.sign() * p.mass;
        }
        score.into_iter().map(|(k, s)| (k, Label::from_positive(s >= 0.0))).collect()
    }
}

fn min_error<'a>(atoms: impl Iterator<Item = (&'a [f64], Label, f64)>) -> f64 {
    let mut per_point: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
    for (x, label, m) in atoms {
        let slot = per_point.entry(point_key(x)).or_insert((0.0, 0.0));
        match label {
            Label::Positive => slot.0 += m,
            Label::Negative => slot.1 += m,
        }
    }
    per_point.values().map(|(pos, neg)| pos.min(*neg)).sum()
}
