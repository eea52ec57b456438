//! Simulation harness: banditified multiclass experiments, the online
//! epoch-greedy loop, the one-hot construction used for lower bounds, and
//! the coverage experiment for the two-action sample-complexity bounds.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::baselines::{train_iwc, train_regression, AllPairsModel, RegressionMode, RegressionModel};
use crate::binary_offset::{offset_map, train_binary_offset, BinaryOffsetModel, DEFAULT_OFFSET};
use crate::costing::{Costed, CostingConfig};
use crate::exact::{Context, ExactProblem};
use crate::learners::{BuiltinClassifier, BuiltinLearner, BuiltinRegressor, BuiltinRegressorModel};
use crate::offset_tree::{train_offset_tree, NodeMode, OffsetTreeConfig, OffsetTreeModel};
use crate::seed::{self, derive};
use crate::{Action, Error, FeatureVector, Label, PartialLabelExample, Policy, Propensity, Result, RewardVector};

const SPLIT_STREAM: u64 = 1;
const BANDIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;
const EXPLORE_STREAM: u64 = 4;

/// A fully labelled example; `label` is the correct action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticlassExample {
    pub x: FeatureVector,
    pub label: Action,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticlassDataset {
    k: usize,
    dim: usize,
    examples: Vec<MulticlassExample>,
}

impl MulticlassDataset {
    pub fn new(k: usize, dim: usize, examples: Vec<MulticlassExample>) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewActions(k));
        }
        for e in &examples {
            if e.x.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: e.x.dim() });
            }
            if e.label.0 >= k {
                return Err(Error::ActionOutOfRange { action: e.label.number(), k });
            }
        }
        Ok(Self { k, dim, examples })
    }

    pub fn num_actions(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn examples(&self) -> &[MulticlassExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes_present(&self) -> usize {
        let mut seen = vec![false; self.k];
        for e in &self.examples {
            seen[e.label.0] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

/// Reveals the reward of one sampled action: `1` if it is the label.
pub fn banditify_with(
    e: &MulticlassExample,
    propensity: &Propensity,
    rng: &mut seed::Rng,
) -> Result<PartialLabelExample> {
    propensity.validate()?;
    let k = propensity.num_actions();
    if e.label.0 >= k {
        return Err(Error::ActionOutOfRange { action: e.label.number(), k });
    }
    let a = propensity.sample_with(rng.gen::<f64>());
    let reward = if a == e.label { 1.0 } else { 0.0 };
    PartialLabelExample::new(e.x.clone(), a, reward, propensity.clone())
}

pub fn banditify(e: &MulticlassExample, propensity: &Propensity, seed: u64) -> Result<PartialLabelExample> {
    banditify_with(e, propensity, &mut seed::rng(seed))
}

/// Banditifies a sequence with one stream seeded by `seed`.
pub fn banditify_all(
    examples: &[MulticlassExample],
    propensity: &Propensity,
    seed: u64,
) -> Result<Vec<PartialLabelExample>> {
    let mut rng = seed::rng(seed);
    examples.iter().map(|e| banditify_with(e, propensity, &mut rng)).collect()
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplorationSchedule {
    /// `min(1, t^(-1/3))`
    Agnostic,
    /// `min(1, t^(-1/2))`
    Realizable,
}

impl ExplorationSchedule {
    /// Explore probability at step `t`, counted from 1.
    pub fn probability(self, t: u64) -> f64 {
        let t = t.max(1) as f64;
        let p = match self {
            ExplorationSchedule::Agnostic => 1.0 / libm::cbrt(t),
            ExplorationSchedule::Realizable => 1.0 / libm::sqrt(t),
        };
        p.min(1.0)
    }
}

impl FromStr for ExplorationSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agnostic" => Ok(Self::Agnostic),
            "realizable" => Ok(Self::Realizable),
            other => Err(Error::Config(alloc::format!("unknown schedule `{other}` (expected agnostic or realizable)"))),
        }
    }
}

impl fmt::Display for ExplorationSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Agnostic => "agnostic",
            Self::Realizable => "realizable",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OffsetTree,
    BinaryOffset,
    Regression,
    Iwc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::OffsetTree, Method::BinaryOffset, Method::Regression, Method::Iwc];

    pub fn name(self) -> &'static str {
        match self {
            Method::OffsetTree => "offset-tree",
            Method::BinaryOffset => "binary-offset",
            Method::Regression => "regression",
            Method::Iwc => "iwc",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::Config(alloc::format!(
                "unknown method `{s}` (expected offset-tree, binary-offset, regression or iwc)"
            ))
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to train one method on a log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub learner: BuiltinLearner,
    pub regressor: BuiltinRegressor,
    pub regression_mode: RegressionMode,
    pub costing: CostingConfig,
    pub offset: f64,
    pub node_mode: NodeMode,
    pub leaf_order: Option<Vec<Action>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::OffsetTree,
            learner: BuiltinLearner::Stump,
            regressor: BuiltinRegressor::LeastSquares(Default::default()),
            regression_mode: RegressionMode::PerAction,
            costing: CostingConfig::default(),
            offset: DEFAULT_OFFSET,
            node_mode: NodeMode::PerNode,
            leaf_order: None,
        }
    }
}

impl TrainConfig {
    /// Learner name as reported next to results.
    pub fn learner_name(&self) -> &'static str {
        match self.method {
            Method::Regression => self.regressor.name(),
            _ => self.learner.name(),
        }
    }
}

/// A trained policy of any supported method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum TrainedModel {
    OffsetTree(OffsetTreeModel<Costed<BuiltinClassifier>>),
    BinaryOffset(BinaryOffsetModel<BuiltinClassifier>),
    Regression(RegressionModel<BuiltinRegressorModel>),
    Iwc(AllPairsModel<Costed<BuiltinClassifier>>),
}

impl TrainedModel {
    pub fn method(&self) -> Method {
        match self {
            TrainedModel::OffsetTree(_) => Method::OffsetTree,
            TrainedModel::BinaryOffset(_) => Method::BinaryOffset,
            TrainedModel::Regression(_) => Method::Regression,
            TrainedModel::Iwc(_) => Method::Iwc,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            TrainedModel::OffsetTree(m) => m.tree.num_actions(),
            TrainedModel::BinaryOffset(_) => 2,
            TrainedModel::Regression(m) => m.k,
            TrainedModel::Iwc(m) => m.k,
        }
    }

    /// Number of trained binary classifiers (or regressors).
    pub fn num_components(&self) -> usize {
        match self {
            TrainedModel::OffsetTree(m) => m.num_node_classifiers(),
            TrainedModel::BinaryOffset(_) => 1,
            TrainedModel::Regression(m) => m.regressors.len(),
            TrainedModel::Iwc(m) => m.pair_classifiers.len(),
        }
    }
}

impl Policy for TrainedModel {
    fn choose(&self, x: &[f64]) -> Action {
        match self {
            TrainedModel::OffsetTree(m) => m.choose(x),
            TrainedModel::BinaryOffset(m) => m.choose(x),
            TrainedModel::Regression(m) => m.choose(x),
            TrainedModel::Iwc(m) => m.choose(x),
        }
    }
}

pub fn train_method(data: &[PartialLabelExample], k: usize, cfg: &TrainConfig) -> Result<TrainedModel> {
    for e in data {
        if e.num_actions() != k {
            return Err(Error::LengthMismatch { expected: k, got: e.num_actions() });
        }
    }
    Ok(match cfg.method {
        Method::OffsetTree => {
            let tree_cfg = OffsetTreeConfig {
                costing: cfg.costing.clone(),
                offset: cfg.offset,
                mode: cfg.node_mode,
                leaf_order: cfg.leaf_order.clone(),
            };
            TrainedModel::OffsetTree(train_offset_tree(data, k, &cfg.learner, &tree_cfg)?)
        }
        Method::BinaryOffset => {
            if k != 2 {
                return Err(Error::Config(alloc::format!("binary-offset needs exactly 2 actions, got {k}")));
            }
            TrainedModel::BinaryOffset(train_binary_offset(data, &cfg.learner, &cfg.costing, cfg.offset)?)
        }
        Method::Regression => TrainedModel::Regression(train_regression(data, k, &cfg.regressor, cfg.regression_mode)?),
        Method::Iwc => TrainedModel::Iwc(train_iwc(data, k, &cfg.learner, &cfg.costing)?),
    })
}

/// Fraction of examples whose chosen action differs from the label.
pub fn multiclass_error<P: Policy + ?Sized>(policy: &P, examples: &[MulticlassExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Degenerate("empty test set"));
    }
    let wrong = examples.iter().filter(|e| policy.choose(&e.x) != e.label).count();
    Ok(wrong as f64 / examples.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub splits: usize,
    pub train_fraction: f64,
    /// Master seed. Splits, banditification and costing streams all derive
    /// from it, so methods sharing a seed see identical splits and logs;
    /// `train.costing.rng_seed` is replaced per split.
    pub seed: u64,
    /// Logging distribution; `None` means uniform.
    pub propensity: Option<Propensity>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { train: TrainConfig::default(), splits: 10, train_fraction: 2.0 / 3.0, seed: 0, propensity: None }
    }
}

impl ExperimentConfig {
    /// All problems, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.splits == 0 {
            out.push("splits must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            out.push(alloc::format!("train_fraction must lie strictly between 0 and 1, got {}", self.train_fraction));
        }
        if let Err(e) = self.train.costing.validate() {
            out.push(alloc::format!("{e}"));
        }
        if !(0.0..=1.0).contains(&self.train.offset) {
            out.push(alloc::format!("offset must lie in [0, 1], got {}", self.train.offset));
        }
        if let Some(p) = &self.propensity {
            if let Err(e) = p.validate() {
                out.push(alloc::format!("{e}"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded random partitions; depends only on `(n, splits, fraction, seed)`.
pub fn split_plan(n: usize, splits: usize, train_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if n < 2 {
        return Err(Error::Degenerate("need at least two examples to split"));
    }
    let n_train = libm::round(n as f64 * train_fraction).clamp(1.0, (n - 1) as f64) as usize;
    Ok((0..splits)
        .map(|s| {
            let mut rng = seed::rng(derive(derive(seed, SPLIT_STREAM), s as u64));
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let test = order.split_off(n_train);
            Split { train: order, test }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitResult {
    pub split: usize,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub method: Method,
    pub learner: &'static str,
    pub splits: Vec<SplitResult>,
    pub mean_error: f64,
    /// `1 − 1/k`
    pub random_guess: f64,
}

fn check_dataset(data: &MulticlassDataset) -> Result<()> {
    if data.num_classes_present() < 2 {
        return Err(Error::Degenerate("dataset has a single class"));
    }
    Ok(())
}

/// One split: banditify the training part, train, score on the test part.
pub fn run_split(data: &MulticlassDataset, cfg: &ExperimentConfig, index: usize, split: &Split) -> Result<SplitResult> {
    let k = data.num_actions();
    let propensity = match &cfg.propensity {
        Some(p) => p.clone(),
        None => Propensity::uniform(k)?,
    };
    if propensity.num_actions() != k {
        return Err(Error::LengthMismatch { expected: k, got: propensity.num_actions() });
    }
    let train: Vec<MulticlassExample> = split.train.iter().map(|&i| data.examples[i].clone()).collect();
    let test: Vec<MulticlassExample> = split.test.iter().map(|&i| data.examples[i].clone()).collect();
    let log = banditify_all(&train, &propensity, derive(derive(cfg.seed, BANDIT_STREAM), index as u64))?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.costing.rng_seed = derive(derive(cfg.seed, TRAIN_STREAM), index as u64);
    let model = train_method(&log, k, &train_cfg)?;
    Ok(SplitResult { split: index, error: multiclass_error(&model, &test)? })
}

pub fn summarize(cfg: &ExperimentConfig, k: usize, mut splits: Vec<SplitResult>) -> ExperimentResult {
    splits.sort_by_key(|s| s.split);
    let mean_error = splits.iter().map(|s| s.error).sum::<f64>() / splits.len().max(1) as f64;
    ExperimentResult {
        method: cfg.train.method,
        learner: cfg.train.learner_name(),
        splits,
        mean_error,
        random_guess: 1.0 - 1.0 / k as f64,
    }
}

/// Sequential over splits; split `s` depends only on `(data, cfg, s)`.
pub fn run_offline_experiment(data: &MulticlassDataset, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    check_dataset(data)?;
    let plan = split_plan(data.len(), cfg.splits, cfg.train_fraction, cfg.seed)?;
    let results =
        plan.iter().enumerate().map(|(s, split)| run_split(data, cfg, s, split)).collect::<Result<Vec<_>>>()?;
    Ok(summarize(cfg, data.num_actions(), results))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineConfig {
    pub train: TrainConfig,
    pub schedule: ExplorationSchedule,
    /// Refit from the buffer every this many steps.
    pub retrain_every: usize,
    /// When false, examples are logged as if uniformly explored, dropping the
    /// `1/p(a)` correction.
    pub importance_weighted: bool,
    /// Also train on exploit steps, logged with the mixture propensities.
    pub include_exploit: bool,
    pub passes: usize,
    pub seed: u64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            schedule: ExplorationSchedule::Agnostic,
            retrain_every: 100,
            importance_weighted: true,
            include_exploit: false,
            passes: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineTrace {
    /// Running error after each step.
    pub running_error: Vec<f64>,
    pub explored: usize,
    pub retrains: usize,
}

impl OnlineTrace {
    pub fn final_error(&self) -> f64 {
        self.running_error.last().copied().unwrap_or(0.0)
    }
}

/// Mixture of uniform exploration with rate `eps` and the greedy arm.
fn mixture(k: usize, eps: f64, greedy: Action) -> Result<Propensity> {
    let mut probs = vec![eps / k as f64; k];
    probs[greedy.0] += 1.0 - eps;
    Propensity::explicit(probs)
}

/// Epoch-greedy over a stream. Before the first refit the greedy arm is
/// action 1.
pub fn run_online_epoch_greedy(stream: &[MulticlassExample], k: usize, cfg: &OnlineConfig) -> Result<OnlineTrace> {
    if k < 2 {
        return Err(Error::TooFewActions(k));
    }
    if cfg.retrain_every == 0 {
        return Err(Error::Config("retrain_every must be at least 1".into()));
    }
    let uniform = Propensity::uniform(k)?;
    let mut rng = seed::rng(derive(cfg.seed, EXPLORE_STREAM));
    let mut model: Option<TrainedModel> = None;
    let mut buffer: Vec<PartialLabelExample> = Vec::new();
    let mut trace = OnlineTrace { running_error: Vec::new(), explored: 0, retrains: 0 };
    let mut mistakes = 0usize;
    let mut t = 0u64;
    for _ in 0..cfg.passes {
        for e in stream {
            if e.label.0 >= k {
                return Err(Error::ActionOutOfRange { action: e.label.number(), k });
            }
            t += 1;
            let eps = cfg.schedule.probability(t);
            let greedy = model.as_ref().map_or(Action(0), |m| m.choose(&e.x));
            let explore = rng.gen::<f64>() < eps;
            let action = if explore { uniform.sample_with(rng.gen::<f64>()) } else { greedy };
            if action != e.label {
                mistakes += 1;
            }
            trace.running_error.push(mistakes as f64 / t as f64);
            if explore {
                trace.explored += 1;
            }
            if explore || cfg.include_exploit {
                let propensity = if cfg.include_exploit && cfg.importance_weighted {
                    mixture(k, eps, greedy)?
                } else {
                    uniform.clone()
                };
                let reward = if action == e.label { 1.0 } else { 0.0 };
                buffer.push(PartialLabelExample::new(e.x.clone(), action, reward, propensity)?);
            }
            if t.is_multiple_of(cfg.retrain_every as u64) && !buffer.is_empty() {
                let mut train_cfg = cfg.train.clone();
                train_cfg.costing.rng_seed = derive(derive(cfg.seed, TRAIN_STREAM), trace.retrains as u64);
                model = Some(train_method(&buffer, k, &train_cfg)?);
                trace.retrains += 1;
            }
        }
    }
    Ok(trace)
}

/// Number of bits needed for `0..k`.
pub fn ceil_log2(k: usize) -> usize {
    if k <= 1 {
        0
    } else {
        (usize::BITS - (k - 1).leading_zeros()) as usize
    }
}

/// `k` equally likely contexts; context `i` has the binary code of `i`
/// (most significant bit first) as features and reward 1 only on action `i`.
pub fn lower_bound_problem(k: usize) -> Result<ExactProblem> {
    if k < 2 {
        return Err(Error::TooFewActions(k));
    }
    let bits = ceil_log2(k);
    let points = (0..k)
        .map(|i| {
            let x: Vec<f64> = (0..bits).rev().map(|b| ((i >> b) & 1) as f64).collect();
            let mut r = vec![0.0; k];
            r[i] = 1.0;
            Ok((FeatureVector::new(x)?, RewardVector::new(r)?))
        })
        .collect::<Result<Vec<_>>>()?;
    ExactProblem::deterministic(k, points, Propensity::uniform(k)?)
}

/// Every `(context, outcome, action)` once, logged with the problem's
/// propensities. Masses are ignored, so this is the exhaustive log of the
/// support rather than a sample.
pub fn exhaustive_log(problem: &ExactProblem) -> Result<Vec<PartialLabelExample>> {
    let k = problem.num_actions();
    let mut log = Vec::new();
    for ctx in problem.contexts() {
        for (_, rewards) in &ctx.outcomes {
            for a in 0..k {
                log.push(PartialLabelExample::new(
                    ctx.x.clone(),
                    Action(a),
                    rewards.get(Action(a)),
                    problem.propensity().clone(),
                )?);
            }
        }
    }
    Ok(log)
}

/// Two-action problem over contexts `x = 0..n`, uniform over contexts;
/// on context `i` action 1 is the rewarded one with probability
/// `(i + 1) / (n + 1)`, otherwise action 2.
pub fn coverage_problem(n: usize) -> Result<ExactProblem> {
    if n == 0 {
        return Err(Error::Degenerate("coverage problem needs a context"));
    }
    let contexts = (0..n)
        .map(|i| {
            let q = (i + 1) as f64 / (n + 1) as f64;
            Ok(Context {
                prob: 1.0 / n as f64,
                x: FeatureVector::new(vec![i as f64])?,
                outcomes: vec![(q, RewardVector::new(vec![1.0, 0.0])?), (1.0 - q, RewardVector::new(vec![0.0, 1.0])?)],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ExactProblem::new(2, contexts, Propensity::uniform(2)?)
}

/// Policy on integer contexts: bit `i` of the mask picks action 2 on `x = i`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Labeling(pub u64);

impl Policy for Labeling {
    fn choose(&self, x: &[f64]) -> Action {
        Action(((self.0 >> (x[0] as u32)) & 1) as usize)
    }
}

/// All `2^n` labelings of `n ≤ 63` contexts.
pub fn labelings(n: usize) -> Vec<Labeling> {
    (0..1u64 << n).map(Labeling).collect()
}

/// The offset-½ deviation bound `sqrt((ln|C| + ln(2/δ)) / 2m)`.
pub fn offset_half_bound(m: usize, classes: usize, delta: f64) -> f64 {
    libm::sqrt((libm::log(classes as f64) + libm::log(2.0 / delta)) / (2.0 * m as f64))
}

/// The offset-0 bound; `None` when `m − 2·sqrt(m ln(3/δ)) ≤ 0`.
pub fn offset_zero_bound(m: usize, classes: usize, delta: f64) -> Option<f64> {
    let m = m as f64;
    let l3 = libm::log(3.0 / delta);
    let denom = m - 2.0 * libm::sqrt(m * l3);
    (denom > 0.0).then(|| libm::sqrt((libm::log(classes as f64) + l3) / denom))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleComplexityReport {
    pub m: usize,
    pub classes: usize,
    pub delta: f64,
    pub trials: usize,
    pub bound_half: f64,
    pub violations_half: usize,
    /// `None` when the sample is too small for the offset-0 bound; those
    /// trials are skipped.
    pub bound_zero: Option<f64>,
    pub violations_zero: usize,
    pub skipped_zero: usize,
    /// Largest `|η(c,D) − η(c,S)|` seen, per variant.
    pub max_deviation_half: f64,
    pub max_deviation_zero: f64,
}

impl SampleComplexityReport {
    pub fn violation_rate_half(&self) -> f64 {
        self.violations_half as f64 / self.trials.max(1) as f64
    }

    pub fn violation_rate_zero(&self) -> Option<f64> {
        let run = self.trials - self.skipped_zero;
        (run > 0).then(|| self.violations_zero as f64 / run as f64)
    }
}

fn sample_context<'a>(problem: &'a ExactProblem, rng: &mut seed::Rng) -> (&'a Context, &'a RewardVector) {
    let contexts = problem.contexts();
    let mut u = rng.gen::<f64>();
    let mut ctx = &contexts[contexts.len() - 1];
    for c in contexts {
        if u < c.prob {
            ctx = c;
            break;
        }
        u -= c.prob;
    }
    let mut v = rng.gen::<f64>();
    let mut out = &ctx.outcomes[ctx.outcomes.len() - 1].1;
    for (q, r) in &ctx.outcomes {
        if v < *q {
            out = r;
            break;
        }
        v -= q;
    }
    (ctx, out)
}

/// Repeatedly draws `m` logged examples from a two-action problem whose
/// reward vectors are `(1,0)` or `(0,1)` and checks, for every policy in
/// `classes`, whether the empirical value strays from the true value by
/// more than the bound. The offset-½ estimate scores agreement with the
/// recovered label on all `m` examples; the offset-0 estimate keeps only
/// examples costing accepts (reward 1) and scores agreement with the logged
/// action on those.
pub fn sample_complexity_trial<P: Policy>(
    problem: &ExactProblem,
    classes: &[P],
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<SampleComplexityReport> {
    if problem.num_actions() != 2 {
        return Err(Error::LengthMismatch { expected: 2, got: problem.num_actions() });
    }
    if classes.is_empty() || m == 0 {
        return Err(Error::Degenerate("need at least one classifier and one example"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(alloc::format!("delta must lie in (0, 1), got {delta}")));
    }
    let p = problem.propensity();
    if (p.prob(Action(0)) - 0.5).abs() > crate::PROBABILITY_TOLERANCE {
        return Err(Error::Config("sample-complexity trials need uniform action choice".into()));
    }
    for ctx in problem.contexts() {
        for (_, r) in &ctx.outcomes {
            if !matches!(r.as_slice(), [a, b] if (*a == 1.0 && *b == 0.0) || (*a == 0.0 && *b == 1.0)) {
                return Err(Error::Config("reward vectors must be (1,0) or (0,1)".into()));
            }
        }
    }
    let truth: Vec<f64> = classes.iter().map(|c| crate::exact::policy_value(c, problem)).collect();
    let bound_half = offset_half_bound(m, classes.len(), delta);
    let bound_zero = offset_zero_bound(m, classes.len(), delta);
    let mut report = SampleComplexityReport {
        m,
        classes: classes.len(),
        delta,
        trials,
        bound_half,
        violations_half: 0,
        bound_zero,
        violations_zero: 0,
        skipped_zero: 0,
        max_deviation_half: 0.0,
        max_deviation_zero: 0.0,
    };
    for trial in 0..trials {
        let mut rng = seed::rng(derive(seed, trial as u64));
        let mut sample = Vec::with_capacity(m);
        for _ in 0..m {
            let (ctx, r) = sample_context(problem, &mut rng);
            let a = p.sample_with(rng.gen::<f64>());
            sample.push(PartialLabelExample::new(ctx.x.clone(), a, r.get(a), p.clone())?);
        }
        let half: Vec<(FeatureVector, Label)> = sample
            .iter()
            .filter_map(|e| offset_map(e, 0.5).transpose())
            .map(|w| w.map(|w| (w.x, w.label)))
            .collect::<Result<_>>()?;
        let accepted: Vec<&PartialLabelExample> = sample.iter().filter(|e| e.reward == 1.0).collect();
        let mut violated_half = false;
        let mut violated_zero = false;
        for (c, eta) in classes.iter().zip(&truth) {
            let agree = half.iter().filter(|(x, y)| crate::binary_offset::action_label(c.choose(x)) == *y).count();
            let dev = (eta - agree as f64 / m as f64).abs();
            report.max_deviation_half = report.max_deviation_half.max(dev);
            violated_half |= dev > bound_half;
            if let Some(bz) = bound_zero {
                let dev0 = if accepted.is_empty() {
                    f64::INFINITY
                } else {
                    let hits = accepted.iter().filter(|e| c.choose(&e.x) == e.action).count();
                    (eta - hits as f64 / accepted.len() as f64).abs()
                };
                report.max_deviation_zero = report.max_deviation_zero.max(dev0);
                violated_zero |= dev0 > bz;
            }
        }
        report.violations_half += violated_half as usize;
        if bound_zero.is_some() {
            report.violations_zero += violated_zero as usize;
        } else {
            report.skipped_zero += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{policy_regret, policy_value};

    #[test]
    fn coverage_classes() {
        let d = coverage_problem(4).unwrap();
        let classes = labelings(4);
        assert_eq!(classes.len(), 16);
        // Best labeling picks action 1 where q > 1/2: contexts 2 and 3 pick it.
        let best = classes.iter().map(|c| policy_value(c, &d)).fold(0.0, f64::max);
        assert!((best - d.optimal_value()).abs() < 1e-12);
        assert!((policy_value(&Labeling(0b0011), &d) - d.optimal_value()).abs() < 1e-12);
        assert!((policy_value(&Labeling(0), &d) - 0.5).abs() < 1e-12);
    }

    fn fv(x: &[f64]) -> FeatureVector {
        FeatureVector::new(x.to_vec()).unwrap()
    }

    fn mc(x: f64, label: usize) -> MulticlassExample {
        MulticlassExample { x: fv(&[x]), label: Action(label) }
    }

    #[test]
    fn banditify_reward_matches_label() {
        let p = Propensity::Uniform(3);
        for s in 0..50 {
            let e = banditify(&mc(0.0, 1), &p, s).unwrap();
            assert_eq!(e.reward, if e.action == Action(1) { 1.0 } else { 0.0 });
            assert_eq!(e.propensity, p);
        }
    }

    #[test]
    fn banditify_frequencies() {
        let p = Propensity::Uniform(5);
        let examples = vec![mc(0.0, 0); 100_000];
        let log = banditify_all(&examples, &p, 7).unwrap();
        let mut counts = [0usize; 5];
        for e in &log {
            counts[e.action.0] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.2).abs() < 0.005, "{counts:?}");
        }
    }

    #[test]
    fn schedules() {
        for s in [ExplorationSchedule::Agnostic, ExplorationSchedule::Realizable] {
            assert_eq!(s.probability(1), 1.0);
            let mut last = 1.0;
            for t in 1..500 {
                let p = s.probability(t);
                assert!(p > 0.0 && p <= last);
                last = p;
            }
        }
        assert!((ExplorationSchedule::Agnostic.probability(8) - 0.5).abs() < 1e-15);
        assert_eq!(ExplorationSchedule::Realizable.probability(16), 0.25);
    }

    #[test]
    fn lower_bound_shape() {
        let d = lower_bound_problem(4).unwrap();
        assert_eq!(d.contexts().len(), 4);
        for c in d.contexts() {
            assert_eq!(c.x.dim(), 2);
            assert_eq!(c.outcomes[0].1.as_slice().iter().sum::<f64>(), 1.0);
        }
        assert!((d.optimal_value() - 1.0).abs() < 1e-12);
        let v: f64 = (0..4).map(|a| policy_value(&move |_: &[f64]| Action(a), &d)).sum::<f64>() / 4.0;
        assert!((v - 0.25).abs() < 1e-12);
        assert_eq!(lower_bound_problem(2).unwrap().contexts()[1].x.as_slice(), &[1.0]);
    }

    #[test]
    fn offset_tree_recovers_lower_bound_policy() {
        for k in [2, 3, 4, 5, 8] {
            let d = lower_bound_problem(k).unwrap();
            let log = exhaustive_log(&d).unwrap();
            let cfg = TrainConfig { learner: BuiltinLearner::Table, ..Default::default() };
            let m = train_method(&log, k, &cfg).unwrap();
            assert!(policy_regret(&m, &d).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn split_plan_is_a_partition() {
        let plan = split_plan(30, 3, 2.0 / 3.0, 9).unwrap();
        for s in &plan {
            assert_eq!(s.train.len(), 20);
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort();
            assert_eq!(all, (0..30).collect::<Vec<_>>());
        }
        assert_ne!(plan[0], plan[1]);
        assert_eq!(plan, split_plan(30, 3, 2.0 / 3.0, 9).unwrap());
    }

    #[test]
    fn single_class_dataset_is_rejected() {
        let data = MulticlassDataset::new(3, 1, (0..10).map(|i| mc(i as f64, 2)).collect()).unwrap();
        assert!(matches!(run_offline_experiment(&data, &ExperimentConfig::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn experiment_on_noiseless_table_data() {
        // Every x appears many times so the train part covers each.
        let examples: Vec<_> = (0..300).map(|i| mc((i % 3) as f64, i % 3)).collect();
        let data = MulticlassDataset::new(3, 1, examples).unwrap();
        let cfg = ExperimentConfig {
            train: TrainConfig { learner: BuiltinLearner::Table, ..Default::default() },
            ..Default::default()
        };
        let r = run_offline_experiment(&data, &cfg).unwrap();
        assert_eq!(r.splits.len(), 10);
        assert_eq!(r.mean_error, 0.0);
        assert!((r.random_guess - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r, run_offline_experiment(&data, &cfg).unwrap());
    }

    #[test]
    fn binary_offset_refuses_three_actions() {
        let log = banditify_all(&[mc(0.0, 0)], &Propensity::Uniform(3), 0).unwrap();
        let cfg = TrainConfig { method: Method::BinaryOffset, ..Default::default() };
        assert!(train_method(&log, 3, &cfg).is_err());
    }

    #[test]
    fn online_loop_learns_a_separable_stream() {
        let stream: Vec<_> = (0..3000).map(|i| mc((i % 4) as f64, i % 4)).collect();
        let cfg = OnlineConfig {
            train: TrainConfig { learner: BuiltinLearner::Table, ..Default::default() },
            schedule: ExplorationSchedule::Realizable,
            ..Default::default()
        };
        let trace = run_online_epoch_greedy(&stream, 4, &cfg).unwrap();
        assert_eq!(trace.running_error.len(), 3000);
        assert_eq!(trace.retrains, 30);
        assert!(trace.final_error() < 0.1, "{}", trace.final_error());
        assert_eq!(trace, run_online_epoch_greedy(&stream, 4, &cfg).unwrap());
    }

    #[test]
    fn mixture_propensities_are_valid() {
        let p = mixture(4, 0.5, Action(2)).unwrap();
        assert_eq!(p.to_vec(), vec![0.125, 0.125, 0.625, 0.125]);
    }

    #[test]
    fn sample_complexity_bounds() {
        assert!(offset_zero_bound(1000, 16, 0.1).unwrap() > offset_half_bound(1000, 16, 0.1));
        assert_eq!(offset_zero_bound(10, 16, 0.1), None);
    }

    #[test]
    fn perfect_classifier_has_zero_deviation() {
        let d = ExactProblem::deterministic(
            2,
            vec![
                (fv(&[0.0]), RewardVector::new(vec![1.0, 0.0]).unwrap()),
                (fv(&[1.0]), RewardVector::new(vec![0.0, 1.0]).unwrap()),
            ],
            Propensity::Uniform(2),
        )
        .unwrap();
        let perfect = |x: &[f64]| Action(x[0] as usize);
        let r = sample_complexity_trial(&d, &[perfect], 200, 0.1, 20, 3).unwrap();
        assert_eq!(r.max_deviation_half, 0.0);
        assert_eq!(r.max_deviation_zero, 0.0);
        assert_eq!(r.violations_half, 0);
    }
}
