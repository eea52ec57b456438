//! Costing: importance-weighted examples to unweighted ones by rejection
//! sampling. Each example is kept with probability `w / normalizer`
//! independently in each of `draws` resampled sets, so a learner trained on
//! the result optimises the importance-weighted loss.

use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::exact::{BinaryDistribution, BinaryPoint, WeightedBinaryDistribution};
use crate::types::append_tags;
use crate::{seed, BinaryClassifier, BinaryExample, BinaryLearner, Error, Label, Result, WeightedBinaryExample};

/// Denominator of the acceptance probability.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Normalizer {
    /// Largest weight in the set being resampled.
    MaxWeight,
    /// Fixed cap; every weight must be at or below it.
    Cap(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostingConfig {
    pub draws: usize,
    pub normalizer: Normalizer,
    pub rng_seed: u64,
    /// Train one classifier on the union of the draws, with the draw index
    /// appended as a feature, instead of one classifier per draw.
    pub tag_draws: bool,
}

impl Default for CostingConfig {
    fn default() -> Self {
        Self { draws: 1, normalizer: Normalizer::MaxWeight, rng_seed: 0, tag_draws: false }
    }
}

impl CostingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Config("costing draws must be at least 1".into()));
        }
        if let Normalizer::Cap(w) = self.normalizer {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Config(alloc::format!("costing cap must be positive, got {w}")));
            }
        }
        Ok(())
    }

    /// Same settings with an independent seed for stream `stream`.
    pub fn stream(&self, stream: u64) -> Self {
        Self { rng_seed: seed::derive(self.rng_seed, stream), ..self.clone() }
    }
}

/// Indices accepted in each draw, for arbitrary weighted items.
pub fn accepted_indices(weights: &[f64], cfg: &CostingConfig) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let mut max = 0.0f64;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidWeight(w));
        }
        max = max.max(w);
    }
    let normalizer = match cfg.normalizer {
        Normalizer::MaxWeight => max,
        Normalizer::Cap(cap) => {
            if max > cap {
                return Err(Error::WeightAboveCap { cap, weight: max });
            }
            cap
        }
    };
    let mut out = Vec::with_capacity(cfg.draws);
    for draw in 0..cfg.draws {
        let mut rng = seed::rng(seed::derive(cfg.rng_seed, draw as u64));
        let mut kept = Vec::new();
        for (i, &w) in weights.iter().enumerate() {
            let u: f64 = rng.gen();
            if normalizer > 0.0 && u < w / normalizer {
                kept.push(i);
            }
        }
        out.push(kept);
    }
    Ok(out)
}

/// `cfg.draws` unweighted resamples of `set`.
pub fn rejection_sample(set: &[WeightedBinaryExample], cfg: &CostingConfig) -> Result<Vec<Vec<BinaryExample>>> {
    let weights: Vec<f64> = set.iter().map(|e| e.weight).collect();
    Ok(accepted_indices(&weights, cfg)?
        .into_iter()
        .map(|kept| kept.into_iter().map(|i| BinaryExample { x: set[i].x.clone(), label: set[i].label }).collect())
        .collect())
}

/// `Q(x, y) ∝ w · P(x, y, w)`, marginalised over `w`.
pub fn induced_distribution(p: &WeightedBinaryDistribution) -> Result<BinaryDistribution> {
    let w_bar = p.mean_weight();
    if !(w_bar > 0.0) {
        return Err(Error::Degenerate("expected importance weight is zero"));
    }
    let points = p
        .points()
        .iter()
        .filter(|pt| pt.weight > 0.0 && pt.mass > 0.0)
        .map(|pt| BinaryPoint { mass: pt.mass * pt.weight / w_bar, x: pt.x.clone(), label: pt.label })
        .collect();
    BinaryDistribution::new(points)
}

/// `E_P[w · 1(c(x) ≠ y)]`.
pub fn weighted_error<C: BinaryClassifier + ?Sized>(c: &C, p: &WeightedBinaryDistribution) -> f64 {
    p.weighted_error(c)
}

/// Classifier obtained by running a learner on costed draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Costed<C> {
    /// Every draw came back empty.
    Constant { label: Label },
    /// One classifier per draw; majority vote, ties to `+1`.
    Vote { members: Vec<C> },
    /// One classifier over the union with the draw index appended; votes
    /// over all indices at prediction time.
    Tagged { model: C, draws: usize },
}

impl<C: BinaryClassifier> BinaryClassifier for Costed<C> {
    fn predict(&self, x: &[f64]) -> Label {
        match self {
            Costed::Constant { label } => *label,
            Costed::Vote { members } => {
                if let [only] = members.as_slice() {
                    return only.predict(x);
                }
                let score: i64 = members.iter().map(|c| if c.predict(x) == Label::Positive { 1 } else { -1 }).sum();
                Label::from_positive(score >= 0)
            }
            Costed::Tagged { model, draws } => {
                let score: i64 = (0..*draws)
                    .map(|d| {
                        let tagged = append_tags(x, &[d as f64]);
                        if model.predict(&tagged) == Label::Positive {
                            1
                        } else {
                            -1
                        }
                    })
                    .sum();
                Label::from_positive(score >= 0)
            }
        }
    }
}

/// Fits `learner` to already-drawn resamples.
pub fn fit_draws<L: BinaryLearner>(
    learner: &L,
    draws: Vec<Vec<BinaryExample>>,
    cfg: &CostingConfig,
) -> Costed<L::Model> {
    if draws.iter().all(Vec::is_empty) {
        return Costed::Constant { label: Label::Positive };
    }
    let learner_seed = |d: u64| seed::derive(cfg.rng_seed, (1 << 32) + d);
    if cfg.tag_draws {
        let n = draws.len();
        let union: Vec<BinaryExample> = draws
            .into_iter()
            .enumerate()
            .flat_map(|(d, set)| {
                set.into_iter().map(move |e| BinaryExample { x: e.x.tagged(&[d as f64]), label: e.label })
            })
            .collect();
        Costed::Tagged { model: learner.train(&union, learner_seed(0)), draws: n }
    } else {
        let members = draws.iter().enumerate().map(|(d, set)| learner.train(set, learner_seed(d as u64))).collect();
        Costed::Vote { members }
    }
}

/// `Learner(Costing(set))`.
pub fn train_costed<L: BinaryLearner>(
    learner: &L,
    set: &[WeightedBinaryExample],
    cfg: &CostingConfig,
) -> Result<Costed<L::Model>> {
    let draws = rejection_sample(set, cfg)?;
    Ok(fit_draws(learner, draws, cfg))
}
