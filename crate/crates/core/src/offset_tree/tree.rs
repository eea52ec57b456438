use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Action, Error, Label, Result};

/// Which side of its parent a node or leaf hangs on.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn label(self) -> Label {
        match self {
            Side::Left => Label::LEFT,
            Side::Right => Label::RIGHT,
        }
    }

    pub fn from_label(label: Label) -> Self {
        if label == Label::LEFT {
            Side::Left
        } else {
            Side::Right
        }
    }

    pub fn other(self) -> Self {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Child {
    Leaf(Action),
    Node(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub left: Child,
    pub right: Child,
    pub depth: usize,
    pub parent: Option<(usize, Side)>,
}

impl TreeNode {
    pub fn child(&self, side: Side) -> Child {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }
}

/// Answers "left or right?" at internal node `node` for features `x`.
pub trait NodeRouter {
    fn route(&self, node: usize, x: &[f64]) -> Label;
}

impl<F> NodeRouter for F
where
    F: Fn(usize, &[f64]) -> Label,
{
    fn route(&self, node: usize, x: &[f64]) -> Label {
        self(node, x)
    }
}

/// Maximally balanced binary tree over `k` actions.
///
/// Internal nodes are numbered breadth-first from the root (`0`). The shape
/// is the complete binary tree with `k` leaves: the deepest leaves fill the
/// left of the bottom level, so shallower leaves sit to the right.
/// `leaf_order[i]` is the action at leaf position `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr", into = "TreeRepr")]
pub struct ActionTree {
    k: usize,
    nodes: Vec<TreeNode>,
    leaf_order: Vec<Action>,
    leaf_parent: Vec<(usize, Side)>,
    leaf_depth: Vec<usize>,
}

pub(crate) fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// Size of the left subtree of a complete binary tree with `n ≥ 2` leaves.
fn left_size(n: usize) -> usize {
    let height = ceil_log2(n);
    let half = 1usize << (height - 1);
    let bottom = 2 * (n - half);
    if bottom >= half {
        half
    } else {
        (half >> 1) + bottom / 2
    }
}

impl ActionTree {
    /// Tree with leaves in action-index order.
    pub fn balanced(k: usize) -> Result<Self> {
        let order: Vec<Action> = (0..k).map(Action).collect();
        Self::with_leaf_order(k, &order)
    }

    pub fn with_leaf_order(k: usize, leaf_order: &[Action]) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewActions(k));
        }
        if leaf_order.len() != k {
            return Err(Error::LengthMismatch { expected: k, got: leaf_order.len() });
        }
        let mut seen = vec![false; k];
        for a in leaf_order {
            if a.0 >= k || seen[a.0] {
                return Err(Error::Config(alloc::format!("leaf order is not a permutation of 1..={k}")));
            }
            seen[a.0] = true;
        }

        let mut nodes: Vec<TreeNode> = Vec::with_capacity(k - 1);
        let mut leaf_parent = vec![(0, Side::Left); k];
        let mut leaf_depth = vec![0; k];
        // (first leaf position, leaf count, depth, attachment point)
        let mut queue = alloc::collections::VecDeque::new();
        queue.push_back((0usize, k, 0usize, None::<(usize, Side)>));
        while let Some((start, count, depth, parent)) = queue.pop_front() {
            let child = if count == 1 {
                let action = leaf_order[start];
                let (p, side) = parent.expect("k >= 2 so every leaf has a parent");
                leaf_parent[action.0] = (p, side);
                leaf_depth[action.0] = depth;
                Child::Leaf(action)
            } else {
                let id = nodes.len();
                nodes.push(TreeNode { left: Child::Node(usize::MAX), right: Child::Node(usize::MAX), depth, parent });
                let l = left_size(count);
                queue.push_back((start, l, depth + 1, Some((id, Side::Left))));
                queue.push_back((start + l, count - l, depth + 1, Some((id, Side::Right))));
                Child::Node(id)
            };
            if let Some((p, side)) = parent {
                match side {
                    Side::Left => nodes[p].left = child,
                    Side::Right => nodes[p].right = child,
                }
            }
        }
        Ok(Self { k, nodes, leaf_order: leaf_order.to_vec(), leaf_parent, leaf_depth })
    }

    pub fn num_actions(&self) -> usize {
        self.k
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_order(&self) -> &[Action] {
        &self.leaf_order
    }

    /// `⌈log₂ k⌉`.
    pub fn depth(&self) -> usize {
        ceil_log2(self.k)
    }

    /// Number of internal nodes above the leaf of `action`.
    pub fn leaf_depth(&self, action: Action) -> usize {
        self.leaf_depth[action.0]
    }

    pub fn leaf_parent(&self, action: Action) -> (usize, Side) {
        self.leaf_parent[action.0]
    }

    /// Internal nodes, deepest first; ties by id.
    pub fn bottom_up_order(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.nodes.len()).collect();
        ids.sort_by(|&a, &b| self.nodes[b].depth.cmp(&self.nodes[a].depth).then(a.cmp(&b)));
        ids
    }

    /// Actions below `child`, left to right.
    pub fn leaves(&self, child: Child) -> Vec<Action> {
        let mut out = Vec::new();
        let mut stack = vec![child];
        while let Some(c) = stack.pop() {
            match c {
                Child::Leaf(a) => out.push(a),
                Child::Node(v) => {
                    stack.push(self.nodes[v].right);
                    stack.push(self.nodes[v].left);
                }
            }
        }
        out
    }

    /// Side of `node` whose subtree holds `action`, if any.
    pub fn side_containing(&self, node: usize, action: Action) -> Option<Side> {
        let (mut cur, mut side) = self.leaf_parent[action.0];
        loop {
            if cur == node {
                return Some(side);
            }
            (cur, side) = self.nodes[cur].parent?;
        }
    }

    /// Descends from `start`, following `router`, to a leaf.
    pub fn winner<R: NodeRouter + ?Sized>(&self, router: &R, start: Child, x: &[f64]) -> Action {
        let mut cur = start;
        loop {
            match cur {
                Child::Leaf(a) => return a,
                Child::Node(v) => cur = self.nodes[v].child(Side::from_label(router.route(v, x))),
            }
        }
    }

    /// Root-to-leaf prediction.
    pub fn predict<R: NodeRouter + ?Sized>(&self, router: &R, x: &[f64]) -> Action {
        self.winner(router, Child::Node(0), x)
    }

    /// The nodes an example with logged `action` reaches, bottom-up.
    ///
    /// Each step is `(node, side of the observed action, competing action)`.
    /// The walk continues upward only while the router sends `action` up,
    /// and stops after recording `stop_at` without querying that node.
    pub fn path_steps<R: NodeRouter + ?Sized>(
        &self,
        router: &R,
        action: Action,
        x: &[f64],
        stop_at: Option<usize>,
    ) -> Vec<(usize, Side, Action)> {
        let mut steps = Vec::with_capacity(self.leaf_depth[action.0]);
        let (mut cur, mut side) = self.leaf_parent[action.0];
        loop {
            let rival = self.winner(router, self.nodes[cur].child(side.other()), x);
            steps.push((cur, side, rival));
            if stop_at == Some(cur) || router.route(cur, x) != side.label() {
                break;
            }
            match self.nodes[cur].parent {
                Some((p, s)) => (cur, side) = (p, s),
                None => break,
            }
        }
        steps
    }
}

#[derive(Serialize, Deserialize)]
struct TreeRepr {
    k: usize,
    leaf_order: Vec<Action>,
    nodes: Vec<(Child, Child)>,
}

impl From<ActionTree> for TreeRepr {
    fn from(t: ActionTree) -> Self {
        TreeRepr { k: t.k, nodes: t.nodes.iter().map(|n| (n.left, n.right)).collect(), leaf_order: t.leaf_order }
    }
}

impl TryFrom<TreeRepr> for ActionTree {
    type Error = Error;

    fn try_from(repr: TreeRepr) -> Result<Self> {
        let tree = ActionTree::with_leaf_order(repr.k, &repr.leaf_order)?;
        let shape: Vec<(Child, Child)> = tree.nodes.iter().map(|n| (n.left, n.right)).collect();
        if shape != repr.nodes {
            return Err(Error::Config("stored tree shape does not match its leaf order".into()));
        }
        Ok(tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn depths(k: usize) -> Vec<usize> {
        let t = ActionTree::balanced(k).unwrap();
        t.leaf_order().iter().map(|&a| t.leaf_depth(a)).collect()
    }

    #[test]
    fn two_actions() {
        let t = ActionTree::balanced(2).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.nodes()[0].left, Child::Leaf(Action(0)));
        assert_eq!(t.nodes()[0].right, Child::Leaf(Action(1)));
    }

    #[test]
    fn eight_actions() {
        let t = ActionTree::balanced(8).unwrap();
        assert_eq!(t.nodes().len(), 7);
        assert_eq!(t.depth(), 3);
        assert_eq!(depths(8), vec![3; 8]);
    }

    #[test]
    fn shallow_leaves_sit_right() {
        assert_eq!(depths(3), vec![2, 2, 1]);
        assert_eq!(depths(5), vec![3, 3, 2, 2, 2]);
        assert_eq!(depths(6), vec![3, 3, 3, 3, 2, 2]);
        assert_eq!(depths(7), vec![3, 3, 3, 3, 3, 3, 2]);
    }

    #[test]
    fn every_shape_is_full_and_balanced() {
        for k in 2..=40 {
            let t = ActionTree::balanced(k).unwrap();
            assert_eq!(t.nodes().len(), k - 1);
            let d = depths(k);
            // Kraft equality holds exactly for full binary trees.
            let kraft: f64 = d.iter().map(|&x| 1.0 / (1u64 << x) as f64).sum();
            assert_eq!(kraft, 1.0);
            assert_eq!(*d.iter().max().unwrap(), t.depth());
            assert!(d.iter().max().unwrap() - d.iter().min().unwrap() <= 1);
            let mut all = t.leaves(Child::Node(0));
            assert_eq!(all, t.leaf_order().to_vec());
            all.sort();
            assert_eq!(all, (0..k).map(Action).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(ActionTree::balanced(1), Err(Error::TooFewActions(1)));
        assert!(ActionTree::with_leaf_order(3, &[Action(0), Action(0), Action(2)]).is_err());
        assert!(ActionTree::with_leaf_order(3, &[Action(0), Action(1)]).is_err());
    }

    #[test]
    fn descent_follows_router() {
        let t = ActionTree::balanced(4).unwrap();
        // root (0) right, then its right child prefers left: leaf position 3.
        let router = |node: usize, _: &[f64]| if node == 0 { Label::RIGHT } else { Label::LEFT };
        assert_eq!(t.predict(&router, &[]), Action(2));
        let all_left = |_: usize, _: &[f64]| Label::LEFT;
        assert_eq!(t.predict(&all_left, &[]), Action(0));
    }

    #[test]
    fn custom_leaf_order() {
        let order = [Action(3), Action(1), Action(0), Action(2)];
        let t = ActionTree::with_leaf_order(4, &order).unwrap();
        let all_left = |_: usize, _: &[f64]| Label::LEFT;
        assert_eq!(t.predict(&all_left, &[]), Action(3));
        assert_eq!(t.side_containing(0, Action(2)), Some(Side::Right));
        assert_eq!(t.side_containing(1, Action(2)), None);
    }
}
