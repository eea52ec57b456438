//! Comparison reductions: reward regression with an argmax policy, and
//! importance-weighted multiclass classification via costing and all-pairs.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::costing::{accepted_indices, fit_draws, Costed, CostingConfig};
use crate::exact::{argmax, BinaryDistribution, BinaryPoint, ExactProblem};
use crate::types::append_tags;
use crate::{
    Action, BinaryClassifier, BinaryExample, BinaryLearner, Error, FeatureVector, Label, PartialLabelExample, Policy,
    RegressionLearner, Regressor, Result,
};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionMode {
    /// One regressor on `x ⊕ onehot(a)`.
    Single,
    /// One regressor per action.
    PerAction,
}

/// `x ⊕ onehot(a)` over `k` actions.
pub fn encode_action(x: &[f64], a: Action, k: usize) -> Vec<f64> {
    let mut onehot = vec![0.0; k];
    onehot[a.0] = 1.0;
    append_tags(x, &onehot)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fitted<R> {
    /// No training data for this action.
    Constant {
        value: f64,
    },
    Model {
        model: R,
    },
}

impl<R: Regressor> Regressor for Fitted<R> {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Fitted::Constant { value } => *value,
            Fitted::Model { model } => model.predict(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel<R> {
    pub mode: RegressionMode,
    pub k: usize,
    pub regressors: Vec<Fitted<R>>,
}

impl<R: Regressor> RegressionModel<R> {
    /// Predicted reward `f(x, a)`.
    pub fn reward(&self, x: &[f64], a: Action) -> f64 {
        match self.mode {
            RegressionMode::Single => self.regressors[0].predict(&encode_action(x, a, self.k)),
            RegressionMode::PerAction => self.regressors[a.0].predict(x),
        }
    }
}

impl<R: Regressor> Policy for RegressionModel<R> {
    fn choose(&self, x: &[f64]) -> Action {
        argmax_policy(self, x)
    }
}

/// Smallest-index maximiser of `f(x, ·)`.
pub fn argmax_policy<R: Regressor>(model: &RegressionModel<R>, x: &[f64]) -> Action {
    let predicted: Vec<f64> = (0..model.k).map(|a| model.reward(x, Action(a))).collect();
    argmax(&predicted)
}

/// Fits `((x, a), r_a)` pairs.
pub fn train_regression<L: RegressionLearner>(
    data: &[PartialLabelExample],
    k: usize,
    learner: &L,
    mode: RegressionMode,
) -> Result<RegressionModel<L::Model>> {
    if data.is_empty() {
        return Err(Error::Degenerate("empty training set"));
    }
    if k < 2 {
        return Err(Error::TooFewActions(k));
    }
    for e in data {
        e.validate()?;
        if e.action.0 >= k {
            return Err(Error::ActionOutOfRange { action: e.action.number(), k });
        }
    }
    let regressors = match mode {
        RegressionMode::Single => {
            let xs: Vec<FeatureVector> =
                data.iter().map(|e| FeatureVector::new(encode_action(&e.x, e.action, k))).collect::<Result<_>>()?;
            let ys: Vec<f64> = data.iter().map(|e| e.reward).collect();
            vec![Fitted::Model { model: learner.fit(&xs, &ys) }]
        }
        RegressionMode::PerAction => (0..k)
            .map(|a| {
                let (xs, ys): (Vec<FeatureVector>, Vec<f64>) =
                    data.iter().filter(|e| e.action.0 == a).map(|e| (e.x.clone(), e.reward)).unzip();
                if xs.is_empty() {
                    Fitted::Constant { value: 0.0 }
                } else {
                    Fitted::Model { model: learner.fit(&xs, &ys) }
                }
            })
            .collect(),
    };
    Ok(RegressionModel { mode, k, regressors })
}

/// Index of pair `(i, j)`, `i < j`, in lexicographic order.
pub fn pair_index(i: usize, j: usize, k: usize) -> usize {
    debug_assert!(i < j && j < k);
    i * (2 * k - i - 1) / 2 + (j - i - 1)
}

/// All `(i, j)` with `i < j`, lexicographic.
pub fn pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |i| (i + 1..k).map(move |j| (i, j)))
}

/// Class with the most pairwise wins, ties to the smallest index.
/// `prefers_lower(i, j)` answers whether `i` beats `j`.
pub fn all_pairs_vote(k: usize, mut prefers_lower: impl FnMut(usize, usize) -> bool) -> Action {
    let mut wins = vec![0usize; k];
    for (i, j) in pairs(k) {
        if prefers_lower(i, j) {
            wins[i] += 1;
        } else {
            wins[j] += 1;
        }
    }
    let mut best = 0;
    for a in 1..k {
        if wins[a] > wins[best] {
            best = a;
        }
    }
    Action(best)
}

/// One classifier per unordered action pair; `+1` means the lower index wins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllPairsModel<C> {
    pub k: usize,
    pub pair_classifiers: Vec<C>,
}

impl<C: BinaryClassifier> AllPairsModel<C> {
    pub fn predict(&self, x: &[f64]) -> Action {
        all_pairs_vote(self.k, |i, j| self.pair_classifiers[pair_index(i, j, self.k)].predict(x) == Label::Positive)
    }
}

impl<C: BinaryClassifier> Policy for AllPairsModel<C> {
    fn choose(&self, x: &[f64]) -> Action {
        self.predict(x)
    }
}

pub fn allpairs_predict<C: BinaryClassifier>(model: &AllPairsModel<C>, x: &[f64]) -> Action {
    model.predict(x)
}

/// Weight `r / p(a)` given to a logged example by the multiclass step.
pub fn iwc_weight(e: &PartialLabelExample) -> Result<f64> {
    let p = e.chosen_propensity();
    if !(p > 0.0) {
        return Err(Error::NonPositivePropensity { action: e.action.number(), value: p });
    }
    Ok(e.reward / p)
}

/// Importance-weighted multiclass examples `(x, a, r/p(a))`, costed, then
/// split into one binary problem per action pair. A pair set only uses
/// surviving examples of its two classes; if every draw is empty the pair
/// classifier is the constant "lower index wins".
pub fn train_iwc<L: BinaryLearner>(
    data: &[PartialLabelExample],
    k: usize,
    learner: &L,
    costing: &CostingConfig,
) -> Result<AllPairsModel<Costed<L::Model>>> {
    if k < 2 {
        return Err(Error::TooFewActions(k));
    }
    let mut weights = Vec::with_capacity(data.len());
    for e in data {
        e.validate()?;
        if e.action.0 >= k {
            return Err(Error::ActionOutOfRange { action: e.action.number(), k });
        }
        weights.push(iwc_weight(e)?);
    }
    let draws = accepted_indices(&weights, costing)?;
    let pair_classifiers = pairs(k)
        .map(|(i, j)| {
            let pair_draws: Vec<Vec<BinaryExample>> = draws
                .iter()
                .map(|kept| {
                    kept.iter()
                        .map(|&n| &data[n])
                        .filter(|e| e.action.0 == i || e.action.0 == j)
                        .map(|e| BinaryExample { x: e.x.clone(), label: Label::from_positive(e.action.0 == i) })
                        .collect()
                })
                .collect();
            fit_draws(learner, pair_draws, &costing.stream(pair_index(i, j, k) as u64))
        })
        .collect();
    Ok(AllPairsModel { k, pair_classifiers })
}

/// Pair tag appended to `x` in the all-pairs induced problem.
pub fn pair_tagged(x: &[f64], i: usize, j: usize) -> Vec<f64> {
    append_tags(x, &[i as f64, j as f64])
}

/// The binary problem `IWC-Train` induces from `D`, over `x ⊕ [i, j]`.
/// Costing turns `(x, a, r_a/p(a))` into the multiclass distribution with
/// mass proportional to `E[r_a | x]`; all-pairs then pairs the drawn class
/// with each other class uniformly. Also returns the expected importance
/// `E Σ_a r_a`.
pub fn induced_allpairs(problem: &ExactProblem) -> Result<(BinaryDistribution, f64)> {
    let k = problem.num_actions();
    let p = problem.propensity();
    let mut multiclass: Vec<(usize, Action, f64)> = Vec::new();
    let mut total = 0.0;
    for (c, ctx) in problem.contexts().iter().enumerate() {
        for (q, rewards) in &ctx.outcomes {
            for a in 0..k {
                let pa = p.prob(Action(a));
                let m = ctx.prob * q * pa * (rewards.get(Action(a)) / pa);
                total += m;
                multiclass.push((c, Action(a), m));
            }
        }
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate("all rewards are zero"));
    }
    let share = 1.0 / (k - 1) as f64;
    let mut points = Vec::new();
    for (c, a, m) in multiclass {
        let x = &problem.contexts()[c].x;
        for other in (0..k).filter(|&o| o != a.0) {
            let (i, j) = if a.0 < other { (a.0, other) } else { (other, a.0) };
            points.push(BinaryPoint {
                mass: m / total * share,
                x: FeatureVector::new(pair_tagged(x, i, j))?,
                label: Label::from_positive(a.0 == i),
            });
        }
    }
    Ok((BinaryDistribution::new(points)?, total))
}

/// Squared-error regression problem induced by `Partial-Regression` on `D`.
/// Atoms are `(context, action, reward, mass)`.
#[derive(Clone, Debug)]
pub struct InducedRegression {
    pub atoms: Vec<(usize, Action, f64, f64)>,
}

impl InducedRegression {
    pub fn new(problem: &ExactProblem) -> Self {
        let k = problem.num_actions();
        let p = problem.propensity();
        let mut atoms = Vec::new();
        for (c, ctx) in problem.contexts().iter().enumerate() {
            for (q, rewards) in &ctx.outcomes {
                for a in 0..k {
                    let a = Action(a);
                    atoms.push((c, a, rewards.get(a), ctx.prob * q * p.prob(a)));
                }
            }
        }
        Self { atoms }
    }

    /// `E (f(x, a) − r)²` for a prediction table `f[context][action]`.
    pub fn loss(&self, f: &[Vec<f64>]) -> f64 {
        self.atoms.iter().map(|&(c, a, r, m)| m * (f[c][a.0] - r) * (f[c][a.0] - r)).sum()
    }

    /// `reg_r(f) = loss(f) − min_f' loss(f')`; the minimiser is the
    /// conditional mean, accumulated here from the atoms.
    pub fn regret(&self, f: &[Vec<f64>]) -> f64 {
        let contexts = f.len();
        let k = f.first().map_or(0, Vec::len);
        let mut sum = vec![vec![0.0; k]; contexts];
        let mut mass = vec![vec![0.0; k]; contexts];
        for &(c, a, r, m) in &self.atoms {
            sum[c][a.0] += m * r;
            mass[c][a.0] += m;
        }
        let best: Vec<Vec<f64>> = sum
            .iter()
            .zip(&mass)
            .map(|(s, w)| s.iter().zip(w).map(|(s, w)| if *w > 0.0 { s / w } else { 0.0 }).collect())
            .collect();
        self.loss(f) - self.loss(&best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{BuiltinLearner, BuiltinRegressor, BuiltinRegressorModel, LeastSquares};
    use crate::Propensity;

    fn ex(x: f64, a: usize, r: f64, k: usize) -> PartialLabelExample {
        PartialLabelExample::new(FeatureVector::new(vec![x]).unwrap(), Action(a), r, Propensity::Uniform(k)).unwrap()
    }

    fn fixed(values: Vec<f64>) -> RegressionModel<BuiltinRegressorModel> {
        RegressionModel {
            mode: RegressionMode::PerAction,
            k: values.len(),
            regressors: values.into_iter().map(|value| Fitted::Constant { value }).collect(),
        }
    }

    #[test]
    fn argmax_and_tie_rule() {
        assert_eq!(argmax_policy(&fixed(vec![0.3, 0.7, 0.1]), &[0.0]), Action(1));
        assert_eq!(argmax_policy(&fixed(vec![0.5, 0.5]), &[0.0]), Action(0));
    }

    #[test]
    fn constant_rewards_fit_constant() {
        let data: Vec<_> = (0..12).map(|i| ex(i as f64, i % 3, 0.7, 3)).collect();
        for mode in [RegressionMode::Single, RegressionMode::PerAction] {
            let m = train_regression(&data, 3, &BuiltinRegressor::LeastSquares(LeastSquares::default()), mode).unwrap();
            for x in [0.0, 5.0, 11.0] {
                for a in 0..3 {
                    assert!((m.reward(&[x], Action(a)) - 0.7).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn unseen_action_gets_zero() {
        let data = vec![ex(0.0, 0, 0.4, 3)];
        let m = train_regression(&data, 3, &BuiltinRegressor::Table, RegressionMode::PerAction).unwrap();
        assert_eq!(m.regressors[2], Fitted::Constant { value: 0.0 });
    }

    #[test]
    fn single_mode_appends_one_hot() {
        assert_eq!(encode_action(&[2.0], Action(1), 3), vec![2.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn iwc_weight_is_reward_over_propensity() {
        let e = ex(0.0, 1, 0.5, 4);
        assert_eq!(iwc_weight(&e).unwrap(), 2.0);
    }

    #[test]
    fn vote_counts() {
        // 1v2 -> 1, 1v3 -> 3, 2v3 -> 3
        let winner = all_pairs_vote(3, |i, j| (i, j) == (0, 1));
        assert_eq!(winner, Action(2));
        assert_eq!(all_pairs_vote(5, |_, _| true), Action(0));
        assert_eq!(all_pairs_vote(2, |_, _| false), Action(1));
        // Three-way tie goes to the smallest index.
        assert_eq!(all_pairs_vote(3, |i, j| (i, j) != (0, 2)), Action(0));
    }

    #[test]
    fn pair_indices_are_dense() {
        for k in 2..8 {
            let idx: Vec<usize> = pairs(k).map(|(i, j)| pair_index(i, j, k)).collect();
            assert_eq!(idx, (0..k * (k - 1) / 2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn zero_reward_examples_never_train_pairs() {
        let data: Vec<_> = (0..8).map(|i| ex(i as f64, i % 2, 0.0, 2)).collect();
        let m = train_iwc(&data, 2, &BuiltinLearner::Table, &CostingConfig::default()).unwrap();
        assert_eq!(m.pair_classifiers, vec![Costed::Constant { label: Label::Positive }]);
    }
}
