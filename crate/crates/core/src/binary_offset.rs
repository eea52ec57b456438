//! Two-action reduction with the reward offset.
//!
//! Action 1 is the `+1` label and action 2 the `−1` label. A logged
//! `(x, a, r, p)` becomes `(x, sign(a·(r − offset)), |r − offset| / p(a))`:
//! low rewards vote for the other action, high rewards for the observed one.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::costing::{train_costed, Costed, CostingConfig};
use crate::exact::{BinaryDistribution, ExactProblem, WeightedBinaryDistribution, WeightedPoint};
use crate::{
    costing, Action, BinaryClassifier, BinaryLearner, Error, Label, PartialLabelExample, Policy, Result,
    WeightedBinaryExample,
};

pub const DEFAULT_OFFSET: f64 = 0.5;

/// Label for a two-action decision: action 1 is `+1`.
pub fn action_label(action: Action) -> Label {
    Label::from_positive(action.0 == 0)
}

pub fn label_action(label: Label) -> Action {
    match label {
        Label::Positive => Action(0),
        Label::Negative => Action(1),
    }
}

fn check_offset(offset: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&offset) {
        return Err(Error::Config(alloc::format!("offset must lie in [0, 1], got {offset}")));
    }
    Ok(())
}

/// One partial-label example to one importance-weighted binary example;
/// `None` when the reward equals the offset.
pub fn offset_map(e: &PartialLabelExample, offset: f64) -> Result<Option<WeightedBinaryExample>> {
    if e.num_actions() != 2 {
        return Err(Error::LengthMismatch { expected: 2, got: e.num_actions() });
    }
    let p = e.chosen_propensity();
    if !(p > 0.0) {
        return Err(Error::NonPositivePropensity { action: e.action.number(), value: p });
    }
    let shifted = e.reward - offset;
    if shifted == 0.0 {
        return Ok(None);
    }
    let observed = action_label(e.action);
    let label = if shifted > 0.0 { observed } else { observed.flip() };
    WeightedBinaryExample::new(e.x.clone(), label, shifted.abs() / p).map(Some)
}

/// Trained two-action policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryOffsetModel<C> {
    pub classifier: Costed<C>,
    pub offset: f64,
}

impl<C: BinaryClassifier> Policy for BinaryOffsetModel<C> {
    fn choose(&self, x: &[f64]) -> Action {
        label_action(self.classifier.predict(x))
    }
}

/// `Learner(Costing(S'))`. The costing stream is the one the tree reduction
/// uses for its root, so a two-action tree trains the identical model.
pub fn train_binary_offset<L: BinaryLearner>(
    data: &[PartialLabelExample],
    learner: &L,
    costing: &CostingConfig,
    offset: f64,
) -> Result<BinaryOffsetModel<L::Model>> {
    check_offset(offset)?;
    let mut weighted = Vec::with_capacity(data.len());
    for e in data {
        e.validate()?;
        if let Some(w) = offset_map(e, offset)? {
            weighted.push(w);
        }
    }
    let classifier = train_costed(learner, &weighted, &costing.stream(0))?;
    Ok(BinaryOffsetModel { classifier, offset })
}

/// Importance-weighted distribution produced from `D` and `p`, enumerated
/// over `(x, r, a)`.
pub fn induced_weighted(problem: &ExactProblem, offset: f64) -> Result<WeightedBinaryDistribution> {
    check_offset(offset)?;
    if problem.num_actions() != 2 {
        return Err(Error::LengthMismatch { expected: 2, got: problem.num_actions() });
    }
    let p = problem.propensity();
    let mut points = Vec::new();
    for ctx in problem.contexts() {
        for (q, rewards) in &ctx.outcomes {
            for a in [Action(0), Action(1)] {
                let pa = p.prob(a);
                let shifted = rewards.get(a) - offset;
                let observed = action_label(a);
                let label = if shifted >= 0.0 { observed } else { observed.flip() };
                points.push(WeightedPoint {
                    mass: ctx.prob * q * pa,
                    x: ctx.x.clone(),
                    label,
                    weight: shifted.abs() / pa,
                });
            }
        }
    }
    WeightedBinaryDistribution::new(points)
}

/// `Q_D`: the binary problem the reduction induces from `D`.
pub fn induced_q(problem: &ExactProblem, offset: f64) -> Result<BinaryDistribution> {
    costing::induced_distribution(&induced_weighted(problem, offset)?)
}
