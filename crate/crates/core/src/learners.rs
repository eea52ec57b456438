//! Base learning oracles plugged into the reductions.
//!
//! The reductions are generic over [`BinaryLearner`] and [`RegressionLearner`];
//! [`BuiltinLearner`] and [`BuiltinRegressor`] are the in-crate choices,
//! selectable by name.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seed, BinaryExample, Error, FeatureVector, Label};

/// A trained binary classifier. Must be a pure function of `(self, x)`.
pub trait BinaryClassifier {
    fn predict(&self, x: &[f64]) -> Label;
}

impl<F> BinaryClassifier for F
where
    F: Fn(&[f64]) -> Label,
{
    fn predict(&self, x: &[f64]) -> Label {
        self(x)
    }
}

/// Trains a classifier from unweighted binary examples.
pub trait BinaryLearner {
    type Model: BinaryClassifier;

    fn train(&self, examples: &[BinaryExample], seed: u64) -> Self::Model;
}

/// A trained reward predictor.
pub trait Regressor {
    fn predict(&self, x: &[f64]) -> f64;
}

impl<F> Regressor for F
where
    F: Fn(&[f64]) -> f64,
{
    fn predict(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Fits a squared-error regressor on `(x, target)` pairs.
pub trait RegressionLearner {
    type Model: Regressor;

    fn fit(&self, xs: &[FeatureVector], targets: &[f64]) -> Self::Model;
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn feature_key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same point.
    x.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect()
}

/// `sign(w·x + b)`, with `0` mapped to `+1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BinaryClassifier for LinearClassifier {
    fn predict(&self, x: &[f64]) -> Label {
        Label::from_positive(dot(&self.weights, x) + self.bias >= 0.0)
    }
}

/// Perceptron trainer. Examples are visited in a seeded random order each
/// epoch. With `averaged`, the returned weights are the mean of the weight
/// vector over every step, otherwise the final weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Perceptron {
    pub epochs: usize,
    pub averaged: bool,
}

impl Default for Perceptron {
    fn default() -> Self {
        Self { epochs: 10, averaged: true }
    }
}

impl Perceptron {
    pub fn fit(&self, examples: &[BinaryExample], seed: u64) -> LinearClassifier {
        let dim = examples.first().map_or(0, |e| e.x.dim());
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        let mut w_sum = vec![0.0; dim];
        let mut b_sum = 0.0;
        let mut steps = 0u64;
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = seed::rng(seed);
        for _ in 0..self.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let e = &examples[i];
                let y = e.label.sign();
                if y * (dot(&w, &e.x) + b) <= 0.0 {
                    for (wj, xj) in w.iter_mut().zip(e.x.iter()) {
                        *wj += y * xj;
                    }
                    b += y;
                }
                if self.averaged {
                    for (s, wj) in w_sum.iter_mut().zip(&w) {
                        *s += wj;
                    }
                    b_sum += b;
                }
                steps += 1;
            }
        }
        if self.averaged && steps > 0 {
            let n = steps as f64;
            LinearClassifier { weights: w_sum.into_iter().map(|s| s / n).collect(), bias: b_sum / n }
        } else {
            LinearClassifier { weights: w, bias: b }
        }
    }
}

/// Axis-aligned threshold: `polarity` when `x[feature] > threshold`, the
/// opposite label otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: Label,
}

impl BinaryClassifier for Stump {
    fn predict(&self, x: &[f64]) -> Label {
        if x[self.feature] > self.threshold {
            self.polarity
        } else {
            self.polarity.flip()
        }
    }
}

/// Fits the stump with the fewest training mistakes. Candidates are the two
/// constant classifiers followed by every (feature, midpoint, polarity) in
/// increasing feature and threshold order; the first minimum wins.
pub fn decision_stump(examples: &[BinaryExample]) -> BuiltinClassifier {
    if examples.is_empty() {
        return BuiltinClassifier::Constant(Label::Positive);
    }
    let n = examples.len();
    let positives = examples.iter().filter(|e| e.label == Label::Positive).count();
    let negatives = n - positives;
    let (mut best_err, mut best) = if negatives <= positives {
        (negatives, BuiltinClassifier::Constant(Label::Positive))
    } else {
        (positives, BuiltinClassifier::Constant(Label::Negative))
    };
    let dim = examples[0].x.dim();
    let mut order: Vec<usize> = (0..n).collect();
    for f in 0..dim {
        order.sort_by(|&i, &j| examples[i].x[f].partial_cmp(&examples[j].x[f]).unwrap_or(Ordering::Equal));
        // Sweep left to right; `pos_le`/`neg_le` count examples with value <= threshold.
        let mut pos_le = 0;
        let mut neg_le = 0;
        let mut idx = 0;
        while idx < n {
            let v = examples[order[idx]].x[f];
            while idx < n && examples[order[idx]].x[f] == v {
                match examples[order[idx]].label {
                    Label::Positive => pos_le += 1,
                    Label::Negative => neg_le += 1,
                }
                idx += 1;
            }
            if idx == n {
                break;
            }
            let threshold = 0.5 * (v + examples[order[idx]].x[f]);
            // polarity +1 above: mistakes are positives at or below and negatives above.
            let err_pos = pos_le + (negatives - neg_le);
            let err_neg = neg_le + (positives - pos_le);
            if err_pos < best_err {
                best_err = err_pos;
                best = BuiltinClassifier::Stump(Stump { feature: f, threshold, polarity: Label::Positive });
            }
            if err_neg < best_err {
                best_err = err_neg;
                best = BuiltinClassifier::Stump(Stump { feature: f, threshold, polarity: Label::Negative });
            }
        }
    }
    best
}

/// Per-point majority vote; unseen points and exact ties get `+1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableClassifier {
    entries: Vec<(Vec<f64>, Label)>,
}

impl TableClassifier {
    pub fn fit(examples: &[BinaryExample]) -> Self {
        let mut tally: alloc::collections::BTreeMap<Vec<u64>, (Vec<f64>, i64)> = Default::default();
        for e in examples {
            let slot = tally.entry(feature_key(&e.x)).or_insert_with(|| (e.x.to_vec(), 0));
            slot.1 += match e.label {
                Label::Positive => 1,
                Label::Negative => -1,
            };
        }
        let entries = tally.into_values().map(|(x, score)| (x, Label::from_positive(score >= 0))).collect();
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl BinaryClassifier for TableClassifier {
    fn predict(&self, x: &[f64]) -> Label {
        let key = feature_key(x);
        self.entries
            .binary_search_by(|(stored, _)| feature_key(stored).cmp(&key))
            .map_or(Label::Positive, |i| self.entries[i].1)
    }
}

/// Output of the built-in learners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BuiltinClassifier {
    Constant(Label),
    Linear(LinearClassifier),
    Stump(Stump),
    Table(TableClassifier),
}

impl BinaryClassifier for BuiltinClassifier {
    fn predict(&self, x: &[f64]) -> Label {
        match self {
            BuiltinClassifier::Constant(label) => *label,
            BuiltinClassifier::Linear(c) => c.predict(x),
            BuiltinClassifier::Stump(c) => c.predict(x),
            BuiltinClassifier::Table(c) => c.predict(x),
        }
    }
}

/// Built-in binary learners, selectable by name: `perceptron`, `stump`, `table`.
#[derive(Clone, Debug, PartialEq)]
pub enum BuiltinLearner {
    Perceptron(Perceptron),
    Stump,
    Table,
}

impl BuiltinLearner {
    pub fn name(&self) -> &'static str {
        match self {
            BuiltinLearner::Perceptron(_) => "perceptron",
            BuiltinLearner::Stump => "stump",
            BuiltinLearner::Table => "table",
        }
    }
}

impl BinaryLearner for BuiltinLearner {
    type Model = BuiltinClassifier;

    fn train(&self, examples: &[BinaryExample], seed: u64) -> BuiltinClassifier {
        if examples.is_empty() {
            return BuiltinClassifier::Constant(Label::Positive);
        }
        match self {
            BuiltinLearner::Perceptron(p) => BuiltinClassifier::Linear(p.fit(examples, seed)),
            BuiltinLearner::Stump => decision_stump(examples),
            BuiltinLearner::Table => BuiltinClassifier::Table(TableClassifier::fit(examples)),
        }
    }
}

impl FromStr for BuiltinLearner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "perceptron" => Ok(BuiltinLearner::Perceptron(Perceptron::default())),
            "stump" => Ok(BuiltinLearner::Stump),
            "table" => Ok(BuiltinLearner::Table),
            other => Err(Error::Config(alloc::format!("unknown binary learner `{other}`"))),
        }
    }
}

impl fmt::Display for BuiltinLearner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `w·x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRegressor {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Regressor for LinearRegressor {
    fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

/// Ridge-damped least squares. The intercept is fitted on centred data and
/// is not damped.
#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    pub ridge: f64,
}

const REFINE_STEPS: usize = 3;

impl Default for LeastSquares {
    fn default() -> Self {
        Self { ridge: 1e-6 }
    }
}

impl LeastSquares {
    pub fn fit_linear(&self, xs: &[FeatureVector], targets: &[f64]) -> LinearRegressor {
        let n = xs.len();
        if n == 0 {
            return LinearRegressor { weights: Vec::new(), bias: 0.0 };
        }
        let d = xs[0].dim();
        let nf = n as f64;
        let mut mean_x = vec![0.0; d];
        for x in xs {
            for (m, v) in mean_x.iter_mut().zip(x.iter()) {
                *m += v / nf;
            }
        }
        let mean_y = targets.iter().sum::<f64>() / nf;
        let mut gram = vec![0.0; d * d];
        let mut rhs = vec![0.0; d];
        let mut centred = vec![0.0; d];
        for (x, &y) in xs.iter().zip(targets) {
            for j in 0..d {
                centred[j] = x[j] - mean_x[j];
            }
            let yc = y - mean_y;
            for i in 0..d {
                rhs[i] += centred[i] * yc;
                for j in 0..=i {
                    gram[i * d + j] += centred[i] * centred[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                gram[j * d + i] = gram[i * d + j];
            }
            gram[i * d + i] += self.ridge;
        }
        let Some(mut weights) = crate::linalg::cholesky_solve(&gram, &rhs, d) else {
            return LinearRegressor { weights: vec![0.0; d], bias: mean_y };
        };
        // Iterated damping: pulls the solution back towards the undamped one
        // where the Gram matrix is well conditioned.
        for _ in 0..REFINE_STEPS {
            let residual: Vec<f64> =
                (0..d).map(|i| rhs[i] - dot(&gram[i * d..(i + 1) * d], &weights) + self.ridge * weights[i]).collect();
            match crate::linalg::cholesky_solve(&gram, &residual, d) {
                Some(step) => weights.iter_mut().zip(step).for_each(|(w, s)| *w += s),
                None => break,
            }
        }
        let bias = mean_y - dot(&weights, &mean_x);
        LinearRegressor { weights, bias }
    }
}

/// Per-point mean target; unseen points predict `0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRegressor {
    entries: Vec<(Vec<f64>, f64)>,
}

impl TableRegressor {
    pub fn fit(xs: &[FeatureVector], targets: &[f64]) -> Self {
        let mut sums: alloc::collections::BTreeMap<Vec<u64>, (Vec<f64>, f64, usize)> = Default::default();
        for (x, &y) in xs.iter().zip(targets) {
            let slot = sums.entry(feature_key(x)).or_insert_with(|| (x.to_vec(), 0.0, 0));
            slot.1 += y;
            slot.2 += 1;
        }
        Self { entries: sums.into_values().map(|(x, s, c)| (x, s / c as f64)).collect() }
    }
}

impl Regressor for TableRegressor {
    fn predict(&self, x: &[f64]) -> f64 {
        let key = feature_key(x);
        self.entries.binary_search_by(|(stored, _)| feature_key(stored).cmp(&key)).map_or(0.0, |i| self.entries[i].1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BuiltinRegressorModel {
    Constant { value: f64 },
    Linear(LinearRegressor),
    Table(TableRegressor),
}

impl Regressor for BuiltinRegressorModel {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            BuiltinRegressorModel::Constant { value } => *value,
            BuiltinRegressorModel::Linear(r) => r.predict(x),
            BuiltinRegressorModel::Table(r) => r.predict(x),
        }
    }
}

/// Built-in regressors, selectable by name: `least-squares`, `table`.
#[derive(Clone, Debug, PartialEq)]
pub enum BuiltinRegressor {
    LeastSquares(LeastSquares),
    Table,
}

impl BuiltinRegressor {
    pub fn name(&self) -> &'static str {
        match self {
            BuiltinRegressor::LeastSquares(_) => "least-squares",
            BuiltinRegressor::Table => "table",
        }
    }
}

impl RegressionLearner for BuiltinRegressor {
    type Model = BuiltinRegressorModel;

    fn fit(&self, xs: &[FeatureVector], targets: &[f64]) -> BuiltinRegressorModel {
        match self {
            BuiltinRegressor::LeastSquares(ls) => BuiltinRegressorModel::Linear(ls.fit_linear(xs, targets)),
            BuiltinRegressor::Table => BuiltinRegressorModel::Table(TableRegressor::fit(xs, targets)),
        }
    }
}

impl FromStr for BuiltinRegressor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "least-squares" => Ok(BuiltinRegressor::LeastSquares(LeastSquares::default())),
            "table" => Ok(BuiltinRegressor::Table),
            other => Err(Error::Config(alloc::format!("unknown regressor `{other}`"))),
        }
    }
}

impl fmt::Display for BuiltinRegressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
