//! The Offset Tree: `k`-action reduction to binary classification.
//!
//! Every internal node of a balanced tree over the actions learns which of
//! its two inputs (the winners of its child subtrees) has the larger
//! expected reward. Nodes are trained deepest first; a logged example feeds
//! node `v` only if the already-trained classifiers below `v` route its
//! action up to `v`. Prediction descends from the root, so both training
//! and prediction cost `O(log k)` classifier calls per example.

mod tree;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use tree::{ActionTree, Child, NodeRouter, Side, TreeNode};

use crate::costing::{fit_draws, rejection_sample, train_costed, Costed, CostingConfig};
use crate::exact::{BinaryDistribution, ExactProblem, WeightedBinaryDistribution, WeightedPoint};
use crate::types::append_tags;
use crate::{
    costing, Action, BinaryClassifier, BinaryLearner, Error, Label, PartialLabelExample, Policy, Result,
    WeightedBinaryExample,
};

pub use crate::binary_offset::DEFAULT_OFFSET;

/// Weighted example for one node.
///
/// The observed action `a` met `rival` at the node; `rival_side` is where
/// the rival came from. A reward below the offset votes for the rival, one
/// above it for `a`. The weight is `|r − offset|` over the conditional
/// propensity `p(a) / (p(a) + p(rival))`. Returns `None` when `r` equals the
/// offset.
pub fn node_example(
    e: &PartialLabelExample,
    rival: Action,
    rival_side: Side,
    offset: f64,
) -> Result<Option<WeightedBinaryExample>> {
    let pa = e.chosen_propensity();
    let pb = e.propensity.prob(rival);
    if !(pa > 0.0) {
        return Err(Error::NonPositivePropensity { action: e.action.number(), value: pa });
    }
    if !(pb > 0.0) {
        return Err(Error::NonPositivePropensity { action: rival.number(), value: pb });
    }
    let shifted = e.reward - offset;
    if shifted == 0.0 {
        return Ok(None);
    }
    let toward_rival = rival_side.label();
    let label = if shifted < 0.0 { toward_rival } else { toward_rival.flip() };
    let conditional = pa / (pa + pb);
    WeightedBinaryExample::new(e.x.clone(), label, shifted.abs() / conditional).map(Some)
}

/// Every node example an input produces under fixed node classifiers,
/// bottom-up. At most one per tree level.
pub fn emissions<R: NodeRouter + ?Sized>(
    tree: &ActionTree,
    router: &R,
    e: &PartialLabelExample,
    offset: f64,
) -> Result<Vec<(usize, WeightedBinaryExample)>> {
    let mut out = Vec::new();
    for (node, side, rival) in tree.path_steps(router, e.action, &e.x, None) {
        if let Some(w) = node_example(e, rival, side.other(), offset)? {
            out.push((node, w));
        }
    }
    Ok(out)
}

/// The example `e` contributes to `node`, if it reaches it. Only nodes
/// strictly below `node` are queried.
pub fn emission_at<R: NodeRouter + ?Sized>(
    tree: &ActionTree,
    router: &R,
    node: usize,
    e: &PartialLabelExample,
    offset: f64,
) -> Result<Option<WeightedBinaryExample>> {
    if tree.side_containing(node, e.action).is_none() {
        return Ok(None);
    }
    match tree.path_steps(router, e.action, &e.x, Some(node)).last() {
        Some(&(v, side, rival)) if v == node => node_example(e, rival, side.other(), offset),
        _ => Ok(None),
    }
}

/// How node classifiers are organised.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeMode {
    /// An independent classifier per internal node.
    PerNode,
    /// One classifier for all nodes, with the node index appended to `x`.
    Shared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum NodeClassifiers<C> {
    PerNode { nodes: Vec<C> },
    Shared { model: C },
}

impl<C: BinaryClassifier> NodeRouter for NodeClassifiers<C> {
    fn route(&self, node: usize, x: &[f64]) -> Label {
        match self {
            NodeClassifiers::PerNode { nodes } => nodes[node].predict(x),
            NodeClassifiers::Shared { model } => model.predict(&append_tags(x, &[node as f64])),
        }
    }
}

/// Routes with one classifier over node-tagged features.
pub struct SharedRouter<'a, C: ?Sized>(pub &'a C);

impl<C: BinaryClassifier + ?Sized> NodeRouter for SharedRouter<'_, C> {
    fn route(&self, node: usize, x: &[f64]) -> Label {
        self.0.predict(&append_tags(x, &[node as f64]))
    }
}

struct PartialRouter<'a, C>(&'a [Option<C>]);

impl<C: BinaryClassifier> NodeRouter for PartialRouter<'_, C> {
    fn route(&self, node: usize, x: &[f64]) -> Label {
        self.0[node].as_ref().expect("nodes are trained deepest first").predict(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetTreeModel<C> {
    pub tree: ActionTree,
    pub classifiers: NodeClassifiers<C>,
    pub offset: f64,
}

impl<C: BinaryClassifier> OffsetTreeModel<C> {
    pub fn predict(&self, x: &[f64]) -> Action {
        self.tree.predict(&self.classifiers, x)
    }

    pub fn num_node_classifiers(&self) -> usize {
        match &self.classifiers {
            NodeClassifiers::PerNode { nodes } => nodes.len(),
            NodeClassifiers::Shared { .. } => 1,
        }
    }
}

impl<C: BinaryClassifier> Policy for OffsetTreeModel<C> {
    fn choose(&self, x: &[f64]) -> Action {
        self.predict(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffsetTreeConfig {
    pub costing: CostingConfig,
    pub offset: f64,
    pub mode: NodeMode,
    /// Action at each leaf position; `None` means `1..=k` in order.
    pub leaf_order: Option<Vec<Action>>,
}

impl Default for OffsetTreeConfig {
    fn default() -> Self {
        Self { costing: CostingConfig::default(), offset: DEFAULT_OFFSET, mode: NodeMode::PerNode, leaf_order: None }
    }
}

/// Trains one pass, leaves to root. A node whose costed training set is
/// empty gets the constant `+1` (left) classifier.
pub fn train_offset_tree<L: BinaryLearner>(
    data: &[PartialLabelExample],
    k: usize,
    learner: &L,
    cfg: &OffsetTreeConfig,
) -> Result<OffsetTreeModel<Costed<L::Model>>> {
    if !(0.0..=1.0).contains(&cfg.offset) {
        return Err(Error::Config(alloc::format!("offset must lie in [0, 1], got {}", cfg.offset)));
    }
    cfg.costing.validate()?;
    let tree = match &cfg.leaf_order {
        Some(order) => ActionTree::with_leaf_order(k, order)?,
        None => ActionTree::balanced(k)?,
    };
    for e in data {
        e.validate()?;
        if e.num_actions() != k {
            return Err(Error::LengthMismatch { expected: k, got: e.num_actions() });
        }
    }
    let classifiers = match cfg.mode {
        NodeMode::PerNode => train_per_node(&tree, data, learner, cfg)?,
        NodeMode::Shared => train_shared(&tree, data, learner, cfg)?,
    };
    Ok(OffsetTreeModel { tree, classifiers, offset: cfg.offset })
}

fn train_per_node<L: BinaryLearner>(
    tree: &ActionTree,
    data: &[PartialLabelExample],
    learner: &L,
    cfg: &OffsetTreeConfig,
) -> Result<NodeClassifiers<Costed<L::Model>>> {
    let mut trained: Vec<Option<Costed<L::Model>>> = (0..tree.nodes().len()).map(|_| None).collect();
    for node in tree.bottom_up_order() {
        let mut set = Vec::new();
        for e in data {
            if let Some(w) = emission_at(tree, &PartialRouter(&trained), node, e, cfg.offset)? {
                set.push(w);
            }
        }
        trained[node] = Some(train_costed(learner, &set, &cfg.costing.stream(node as u64))?);
    }
    Ok(NodeClassifiers::PerNode { nodes: trained.into_iter().map(|c| c.expect("every node visited")).collect() })
}

/// Level by level from the bottom: the shared classifier is refitted on the
/// union of all node sets gathered so far, then routes the next level.
fn train_shared<L: BinaryLearner>(
    tree: &ActionTree,
    data: &[PartialLabelExample],
    learner: &L,
    cfg: &OffsetTreeConfig,
) -> Result<NodeClassifiers<Costed<L::Model>>> {
    let order = tree.bottom_up_order();
    let mut union: Vec<WeightedBinaryExample> = Vec::new();
    let mut shared: Option<Costed<L::Model>> = None;
    let mut i = 0;
    while i < order.len() {
        let depth = tree.nodes()[order[i]].depth;
        let level: Vec<usize> = order[i..].iter().copied().take_while(|&v| tree.nodes()[v].depth == depth).collect();
        i += level.len();
        for &node in &level {
            for e in data {
                let emitted = match &shared {
                    Some(model) => emission_at(tree, &SharedRouter(model), node, e, cfg.offset)?,
                    None => emission_at(tree, &|_: usize, _: &[f64]| Label::LEFT, node, e, cfg.offset)?,
                };
                if let Some(mut w) = emitted {
                    w.x = w.x.tagged(&[node as f64]);
                    union.push(w);
                }
            }
        }
        let costing = cfg.costing.stream(depth as u64);
        shared = Some(if union.is_empty() {
            fit_draws(learner, rejection_sample(&union, &costing)?, &costing)
        } else {
            train_costed(learner, &union, &costing)?
        });
    }
    Ok(NodeClassifiers::Shared { model: shared.expect("k >= 2 gives at least one level") })
}

/// Exact importance-weighted binary problem induced by `D` under fixed node
/// classifiers, over node-tagged features `x ⊕ [node]`.
///
/// Each node contributes its problem conditioned on receiving an example:
/// the observed input `a` (versus rival `b`) carries mass
/// `p(a) / (p(a) + p(b))`. The `k − 1` node problems are mixed uniformly.
#[derive(Clone, Debug)]
pub struct InducedTree {
    pub weighted: WeightedBinaryDistribution,
    pub nodes: usize,
}

impl InducedTree {
    /// `Q_D`.
    pub fn q(&self) -> Result<BinaryDistribution> {
        costing::induced_distribution(&self.weighted)
    }

    /// `E_D Σ_v (|r_a − offset| + |r_b − offset|)` over the inputs `(a, b)` of
    /// every node.
    pub fn importance_sum(&self) -> f64 {
        self.nodes as f64 * self.weighted.mean_weight()
    }
}

/// Enumerates `(x, r, a)` through the same per-node emission rule used in
/// training.
pub fn induced_tree<R: NodeRouter + ?Sized>(
    problem: &ExactProblem,
    tree: &ActionTree,
    router: &R,
    offset: f64,
) -> Result<InducedTree> {
    let k = problem.num_actions();
    if tree.num_actions() != k {
        return Err(Error::LengthMismatch { expected: k, got: tree.num_actions() });
    }
    let p = problem.propensity();
    let share = 1.0 / (k - 1) as f64;
    let mut points = Vec::new();
    for ctx in problem.contexts() {
        for (q, rewards) in &ctx.outcomes {
            for a in 0..k {
                let action = Action(a);
                let e = PartialLabelExample {
                    x: ctx.x.clone(),
                    action,
                    reward: rewards.get(action),
                    propensity: p.clone(),
                };
                for (node, side, rival) in tree.path_steps(router, action, &ctx.x, None) {
                    let pa = p.prob(action);
                    let conditional = pa / (pa + p.prob(rival));
                    let mass = ctx.prob * q * conditional * share;
                    let x = ctx.x.tagged(&[node as f64]);
                    match node_example(&e, rival, side.other(), offset)? {
                        Some(w) => points.push(WeightedPoint { mass, x, label: w.label, weight: w.weight }),
                        None => points.push(WeightedPoint { mass, x, label: side.label(), weight: 0.0 }),
                    }
                }
            }
        }
    }
    Ok(InducedTree { weighted: WeightedBinaryDistribution::new(points)?, nodes: k - 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::BuiltinLearner;
    use crate::{FeatureVector, Propensity};
    use alloc::vec;

    fn example(a: usize, r: f64, k: usize) -> PartialLabelExample {
        PartialLabelExample::new(FeatureVector::new(vec![0.0]).unwrap(), Action(a), r, Propensity::Uniform(k)).unwrap()
    }

    #[test]
    fn high_reward_votes_for_observed_side() {
        // a in the right subtree, rival from the left.
        let w = node_example(&example(2, 0.8, 4), Action(0), Side::Left, 0.5).unwrap().unwrap();
        assert_eq!(w.label, Label::RIGHT);
        assert!((w.weight - 0.6).abs() < 1e-12);
    }

    #[test]
    fn low_reward_votes_for_rival() {
        let w = node_example(&example(2, 0.0, 4), Action(0), Side::Left, 0.5).unwrap().unwrap();
        assert_eq!(w.label, Label::LEFT);
        assert!((w.weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn offset_reward_is_dropped() {
        assert_eq!(node_example(&example(2, 0.5, 4), Action(0), Side::Left, 0.5).unwrap(), None);
    }

    #[test]
    fn conditional_propensity_uses_observed_action() {
        let e = PartialLabelExample::new(
            FeatureVector::new(vec![0.0]).unwrap(),
            Action(1),
            0.0,
            Propensity::explicit(vec![0.5, 0.125, 0.125, 0.25]).unwrap(),
        )
        .unwrap();
        // p(a) = 1/8, p(rival) = 1/2: conditional 1/5, weight 0.5 * 5.
        let w = node_example(&e, Action(0), Side::Left, 0.5).unwrap().unwrap();
        assert!((w.weight - 2.5).abs() < 1e-12);
    }

    #[test]
    fn losing_example_does_not_reach_the_root() {
        let tree = ActionTree::balanced(4).unwrap();
        // Node 1 (actions 1, 2) prefers right, so action 1 never reaches the root.
        let router = |node: usize, _: &[f64]| if node == 1 { Label::RIGHT } else { Label::LEFT };
        let e = example(0, 1.0, 4);
        assert!(emission_at(&tree, &router, 0, &e, 0.5).unwrap().is_none());
        assert!(emission_at(&tree, &router, 1, &e, 0.5).unwrap().is_some());
        let winner = example(1, 1.0, 4);
        assert!(emission_at(&tree, &router, 0, &winner, 0.5).unwrap().is_some());
        assert_eq!(emissions(&tree, &router, &winner, 0.5).unwrap().len(), 2);
        assert_eq!(emissions(&tree, &router, &e, 0.5).unwrap().len(), 1);
    }

    #[test]
    fn empty_node_sets_fall_back_to_left() {
        let data: Vec<_> = (0..4).map(|a| example(a, 0.5, 4)).collect();
        let m = train_offset_tree(&data, 4, &BuiltinLearner::Table, &OffsetTreeConfig::default()).unwrap();
        assert_eq!(m.predict(&[0.0]), Action(0));
        match &m.classifiers {
            NodeClassifiers::PerNode { nodes } => {
                assert!(nodes.iter().all(|c| *c == Costed::Constant { label: Label::LEFT }))
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn rejects_mismatched_action_count() {
        let data = vec![example(0, 1.0, 3)];
        assert!(train_offset_tree(&data, 4, &BuiltinLearner::Table, &OffsetTreeConfig::default()).is_err());
    }
}
