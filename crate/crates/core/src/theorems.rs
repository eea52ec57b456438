//! Executable regret transforms. Each check enumerates small problems with
//! the exact evaluator and records the worst observed gap between a regret
//! and its bound.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::baselines::{all_pairs_vote, induced_allpairs, pair_index, InducedRegression};
use crate::binary_offset::{induced_q, label_action};
use crate::costing::{accepted_indices, induced_distribution, CostingConfig, Normalizer};
use crate::exact::{
    argmax, policy_regret, BinaryDistribution, Context, ExactProblem, WeightedBinaryDistribution, WeightedPoint,
};
use crate::offset_tree::{induced_tree, ActionTree};
use crate::seed;
use crate::{Action, Error, FeatureVector, Label, Propensity, Result, RewardVector};

/// Reward levels used by the enumerated families.
pub const GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Worst case of `lhs ≤ rhs` over many cases.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub cases: u64,
    /// `min (rhs − lhs)`; negative means a violation.
    pub min_slack: f64,
    /// `max lhs / rhs` over cases with `rhs > 0`.
    pub max_ratio: f64,
}

impl Default for BoundCheck {
    fn default() -> Self {
        Self { cases: 0, min_slack: f64::INFINITY, max_ratio: 0.0 }
    }
}

impl BoundCheck {
    pub fn record(&mut self, lhs: f64, rhs: f64) {
        self.cases += 1;
        self.min_slack = self.min_slack.min(rhs - lhs);
        if rhs > 1e-12 {
            self.max_ratio = self.max_ratio.max(lhs / rhs);
        }
    }

    pub fn holds(&self, tolerance: f64) -> bool {
        self.cases > 0 && self.min_slack >= -tolerance
    }

    pub fn merge(&mut self, other: &BoundCheck) {
        self.cases += other.cases;
        self.min_slack = self.min_slack.min(other.min_slack);
        self.max_ratio = self.max_ratio.max(other.max_ratio);
    }
}

fn point(i: usize) -> FeatureVector {
    FeatureVector::new(vec![i as f64]).expect("finite")
}

fn grid_vectors(k: usize) -> Vec<RewardVector> {
    let mut out = Vec::new();
    let total = GRID.len().pow(k as u32);
    for mut code in 0..total {
        let mut r = Vec::with_capacity(k);
        for _ in 0..k {
            r.push(GRID[code % GRID.len()]);
            code /= GRID.len();
        }
        out.push(RewardVector::new(r).expect("grid rewards"));
    }
    out
}

/// Nondecreasing index tuples of length `n` over `0..m`.
fn multisets(m: usize, n: usize) -> Vec<Vec<usize>> {
    fn go(m: usize, n: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            go(m, n, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(m, n, 0, &mut Vec::new(), &mut out);
    out
}

/// Random problem on `n` contexts with random masses, each with one to
/// three grid reward vectors.
pub fn random_problem(k: usize, n: usize, rng: &mut seed::Rng) -> Result<ExactProblem> {
    let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=8) as f64).collect();
    let total: f64 = masses.iter().sum();
    let contexts = (0..n)
        .map(|i| {
            let m = rng.gen_range(1..=3);
            let qs: Vec<f64> = (0..m).map(|_| rng.gen_range(1..=4) as f64).collect();
            let qt: f64 = qs.iter().sum();
            let outcomes = qs
                .iter()
                .map(|q| {
                    let r: Vec<f64> = (0..k).map(|_| GRID[rng.gen_range(0..GRID.len())]).collect();
                    Ok((q / qt, RewardVector::new(r)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Context { prob: masses[i] / total, x: point(i), outcomes })
        })
        .collect::<Result<Vec<_>>>()?;
    ExactProblem::new(k, contexts, Propensity::uniform(k)?)
}

/// Every two-action problem with `1..=max_contexts` equally likely contexts
/// and deterministic grid rewards, up to relabelling of the contexts, plus
/// `random` stochastic problems.
pub fn two_action_family(max_contexts: usize, random: usize, seed: u64) -> Result<Vec<ExactProblem>> {
    let vectors = grid_vectors(2);
    let mut out = Vec::new();
    for n in 1..=max_contexts {
        for combo in multisets(vectors.len(), n) {
            let points = combo.iter().enumerate().map(|(i, &v)| (point(i), vectors[v].clone())).collect();
            out.push(ExactProblem::deterministic(2, points, Propensity::Uniform(2))?);
        }
    }
    let mut rng = seed::rng(seed);
    for i in 0..random {
        out.push(random_problem(2, 1 + i % max_contexts, &mut rng)?);
    }
    Ok(out)
}

/// Classifier over contexts `x = [i]` reading bit `i` of `mask`.
pub fn mask_classifier(mask: u64) -> impl Fn(&[f64]) -> Label + Copy {
    move |x: &[f64]| Label::from_positive((mask >> (x[0] as u64)) & 1 == 1)
}

/// `reg_e(c, Q)`, treating a degenerate `Q` (no mass) as zero regret.
fn binary_regret<C: Fn(&[f64]) -> Label>(q: &Option<BinaryDistribution>, c: &C) -> f64 {
    q.as_ref().map_or(0.0, |q| q.regret(c))
}

fn optional(q: Result<BinaryDistribution>) -> Result<Option<BinaryDistribution>> {
    match q {
        Ok(q) => Ok(Some(q)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `reg_η(c, D) ≤ factor · reg_e(c, Q_D)` for every classifier over the
/// contexts of every problem, with `Q_D` built at `offset`.
pub fn check_binary_offset(problems: &[ExactProblem], offset: f64, factor: f64) -> Result<BoundCheck> {
    let mut check = BoundCheck::default();
    for d in problems {
        let q = optional(induced_q(d, offset))?;
        for mask in 0..1u64 << d.contexts().len() {
            let c = mask_classifier(mask);
            let lhs = policy_regret(&|x: &[f64]| label_action(c(x)), d);
            check.record(lhs, factor * binary_regret(&q, &c));
        }
    }
    Ok(check)
}

/// Rewards `(0, 1)` on four equally likely contexts; the classifier picks
/// action 1 on the first `4v` of them. Returns `(reg_η, reg_e)`.
pub fn tightness_fixture(v: f64) -> Result<(f64, f64)> {
    let wrong = libm::round(v * 4.0) as u64;
    if !(0..=4).contains(&wrong) || (wrong as f64 / 4.0 - v).abs() > 1e-12 {
        return Err(Error::Config(alloc::format!("v must be a multiple of 1/4 in [0, 1], got {v}")));
    }
    let points = (0..4).map(|i| (point(i), RewardVector::new(vec![0.0, 1.0]).expect("valid"))).collect();
    let d = ExactProblem::deterministic(2, points, Propensity::Uniform(2))?;
    let c = mask_classifier((1u64 << wrong) - 1);
    let q = induced_q(&d, 0.5)?;
    Ok((policy_regret(&|x: &[f64]| label_action(c(x)), &d), q.regret(&c)))
}

/// Compares the offset-½ bound `reg_e(Q_½)` with the offset-0 bound
/// `2·reg_e(Q_0)`. Returns the offset-0 check and the number of cases where
/// the offset-½ bound is strictly smaller.
pub fn compare_offsets(problems: &[ExactProblem]) -> Result<(BoundCheck, u64)> {
    let mut check = BoundCheck::default();
    let mut tighter = 0;
    for d in problems {
        let half = optional(induced_q(d, 0.5))?;
        let zero = optional(induced_q(d, 0.0))?;
        for mask in 0..1u64 << d.contexts().len() {
            let c = mask_classifier(mask);
            let lhs = policy_regret(&|x: &[f64]| label_action(c(x)), d);
            let bound_zero = 2.0 * binary_regret(&zero, &c);
            check.record(lhs, bound_zero);
            if binary_regret(&half, &c) < bound_zero - 1e-12 {
                tighter += 1;
            }
        }
    }
    Ok((check, tighter))
}

/// Node decisions indexed by `node * contexts + context`.
#[derive(Clone, Debug)]
pub struct NodeTable {
    pub contexts: usize,
    pub labels: Vec<Label>,
}

impl NodeTable {
    pub fn random(nodes: usize, contexts: usize, rng: &mut seed::Rng) -> Self {
        Self { contexts, labels: (0..nodes * contexts).map(|_| Label::from_positive(rng.gen::<bool>())).collect() }
    }

    pub fn route(&self, node: usize, x: &[f64]) -> Label {
        self.labels[node * self.contexts + x[0] as usize]
    }

    /// The same decisions as one classifier over `x ⊕ [node]`.
    pub fn tagged(&self, x: &[f64]) -> Label {
        self.route(x[1] as usize, x)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TreeCheck {
    /// Against `(k − 1)·reg_e`.
    pub worst_case: BoundCheck,
    /// Against `reg_e` times the expected per-node importance.
    pub refined: BoundCheck,
}

/// Random problems on `contexts` contexts, each paired with a random
/// assignment of node decisions.
pub fn check_offset_tree(k: usize, contexts: usize, trials: usize, seed: u64) -> Result<TreeCheck> {
    let tree = ActionTree::balanced(k)?;
    let mut rng = seed::rng(seed);
    let mut out = TreeCheck::default();
    for _ in 0..trials {
        let d = random_problem(k, contexts, &mut rng)?;
        let table = NodeTable::random(k - 1, contexts, &mut rng);
        let router = |node: usize, x: &[f64]| table.route(node, x);
        let induced = induced_tree(&d, &tree, &router, 0.5)?;
        let reg_e = binary_regret(&optional(induced.q())?, &|x: &[f64]| table.tagged(x));
        let lhs = policy_regret(&|x: &[f64]| tree.predict(&router, x), &d);
        out.worst_case.record(lhs, (k - 1) as f64 * reg_e);
        out.refined.record(lhs, induced.importance_sum() * reg_e);
    }
    Ok(out)
}

/// Largest mass difference between two distributions, matched on
/// `(x, label)`.
pub fn max_mass_difference(a: &BinaryDistribution, b: &BinaryDistribution) -> f64 {
    let (a, b) = (a.aggregated(), b.aggregated());
    let mut keys: BTreeMap<_, ()> = a.keys().map(|k| (k.clone(), ())).collect();
    keys.extend(b.keys().map(|k| (k.clone(), ())));
    keys.keys().map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs()).fold(0.0, f64::max)
}

/// Random strictly positive propensity vector with entries at least
/// `0.05`.
pub fn random_propensity(k: usize, rng: &mut seed::Rng) -> Result<Propensity> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Propensity::explicit(raw.iter().map(|r| r / total).collect())
}

/// Max change of `Q_D` when the uniform propensities are replaced by a
/// random positive vector, over the two-action problems.
pub fn binary_p_independence(problems: &[ExactProblem], seed: u64) -> Result<f64> {
    let mut rng = seed::rng(seed);
    let mut worst: f64 = 0.0;
    for d in problems {
        let other = d.with_propensity(random_propensity(2, &mut rng)?)?;
        match (optional(induced_q(d, 0.5))?, optional(induced_q(&other, 0.5))?) {
            (Some(a), Some(b)) => worst = worst.max(max_mass_difference(&a, &b)),
            (None, None) => {}
            _ => return Ok(f64::INFINITY),
        }
    }
    Ok(worst)
}

/// Same for the tree reduction with random node decisions.
pub fn tree_p_independence(k: usize, max_contexts: usize, trials: usize, seed: u64) -> Result<f64> {
    let tree = ActionTree::balanced(k)?;
    let mut rng = seed::rng(seed);
    let mut worst: f64 = 0.0;
    for i in 0..trials {
        let d = random_problem(k, 1 + i % max_contexts, &mut rng)?;
        let other = d.with_propensity(random_propensity(k, &mut rng)?)?;
        let table = NodeTable::random(k - 1, d.contexts().len(), &mut rng);
        let router = |node: usize, x: &[f64]| table.route(node, x);
        let a = optional(induced_tree(&d, &tree, &router, 0.5)?.q())?;
        let b = optional(induced_tree(&other, &tree, &router, 0.5)?.q())?;
        match (a, b) {
            (Some(a), Some(b)) => worst = worst.max(max_mass_difference(&a, &b)),
            (None, None) => {}
            _ => return Ok(f64::INFINITY),
        }
    }
    Ok(worst)
}

/// Folk-theorem identity `e(c, Q)·w̄ = E_P[w·1(c(x) ≠ y)]` over random
/// finite weighted distributions and every classifier on their support.
/// Returns the number of `(P, c)` pairs and the largest absolute gap.
pub fn check_folk_theorem(distributions: usize, seed: u64) -> Result<(u64, f64)> {
    let mut rng = seed::rng(seed);
    let mut pairs = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..distributions {
        let n_x = rng.gen_range(1..=3usize);
        let n = rng.gen_range(1..=5usize);
        let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=6) as f64).collect();
        let total: f64 = masses.iter().sum();
        let mut points: Vec<WeightedPoint> = masses
            .iter()
            .map(|m| WeightedPoint {
                mass: m / total,
                x: point(rng.gen_range(0..n_x)),
                label: Label::from_positive(rng.gen::<bool>()),
                weight: rng.gen_range(0..=8) as f64 / 2.0,
            })
            .collect();
        if points.iter().all(|p| p.weight == 0.0) {
            points[0].weight = 1.0;
        }
        let p = WeightedBinaryDistribution::new(points)?;
        let q = induced_distribution(&p)?;
        for mask in 0..1u64 << n_x {
            let c = mask_classifier(mask);
            worst = worst.max((q.error_rate(&c) * p.mean_weight() - p.weighted_error(&c)).abs());
            pairs += 1;
        }
    }
    Ok((pairs, worst))
}

/// Per-item acceptance frequency over `draws` seeded draws with the given
/// normalizer.
pub fn acceptance_frequencies(weights: &[f64], normalizer: Normalizer, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let cfg = CostingConfig { draws, normalizer, rng_seed: seed, tag_draws: false };
    let mut counts = vec![0usize; weights.len()];
    for kept in accepted_indices(weights, &cfg)? {
        for i in kept {
            counts[i] += 1;
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / draws as f64).collect())
}

/// Squared-error regret of a prediction table plus the policy regret of its
/// argmax, under uniform logging.
fn regression_case(d: &ExactProblem, f: &[Vec<f64>]) -> (f64, f64) {
    let induced = InducedRegression::new(d);
    let lookup = |x: &[f64]| argmax(&f[x[0] as usize]);
    (policy_regret(&lookup, d), induced.regret(f))
}

/// `reg_η(argmax f) ≤ sqrt(2k·reg_r(f))` on random problems with random
/// grid-valued prediction tables.
pub fn check_regression(k: usize, max_contexts: usize, trials: usize, seed: u64) -> Result<BoundCheck> {
    let mut rng = seed::rng(seed);
    let mut check = BoundCheck::default();
    for i in 0..trials {
        let d = random_problem(k, 1 + i % max_contexts, &mut rng)?;
        let f: Vec<Vec<f64>> = d
            .contexts()
            .iter()
            .map(|ctx| {
                let mean = ctx.mean_rewards();
                // Half the tables start from the truth and are perturbed.
                if rng.gen::<bool>() {
                    mean.iter().map(|m| (m + rng.gen_range(-2..=2) as f64 * 0.125).clamp(0.0, 1.0)).collect()
                } else {
                    (0..k).map(|_| GRID[rng.gen_range(0..GRID.len())]).collect()
                }
            })
            .collect();
        let (lhs, reg_r) = regression_case(&d, &f);
        check.record(lhs, libm::sqrt(2.0 * k as f64 * reg_r));
    }
    Ok(check)
}

/// One context with deterministic rewards `values`. The regressor is exact
/// except on `a` and the best action, where it predicts their midpoint;
/// `a` must be below the best index so the tie goes its way. Returns
/// `(reg_η, sqrt(2k·reg_r))`.
pub fn midpoint_fixture(values: &[f64], a: Action) -> Result<(f64, f64)> {
    let k = values.len();
    let best = argmax(values);
    if a.0 >= best.0 {
        return Err(Error::Config("the chosen action must precede the best one".into()));
    }
    let mid = (values[a.0] + values[best.0]) / 2.0;
    if values.iter().enumerate().any(|(i, &v)| i != a.0 && i != best.0 && (v > mid || (v == mid && i < a.0))) {
        return Err(Error::Config("another action would beat or tie the midpoint first".into()));
    }
    let d =
        ExactProblem::deterministic(k, vec![(point(0), RewardVector::new(values.to_vec())?)], Propensity::uniform(k)?)?;
    let mut f = values.to_vec();
    f[a.0] = mid;
    f[best.0] = mid;
    let (lhs, reg_r) = regression_case(&d, &[f]);
    Ok((lhs, libm::sqrt(2.0 * k as f64 * reg_r)))
}

/// `reg_η ≤ k(k−1)·reg_e` for the importance-weighted all-pairs reduction,
/// over random problems and every pair-classifier assignment.
pub fn check_iwc(k: usize, max_contexts: usize, problems: usize, seed: u64) -> Result<BoundCheck> {
    let pairs = k * (k - 1) / 2;
    let mut rng = seed::rng(seed);
    let mut check = BoundCheck::default();
    for i in 0..problems {
        let d = random_problem(k, 1 + i % max_contexts, &mut rng)?;
        let n = d.contexts().len();
        let q = match induced_allpairs(&d) {
            Ok((q, _)) => Some(q),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        for mask in 0..1u64 << (pairs * n) {
            let bit = |x: usize, i: usize, j: usize| (mask >> (x * pairs + pair_index(i, j, k))) & 1 == 1;
            let pair_c = |x: &[f64]| Label::from_positive(bit(x[0] as usize, x[1] as usize, x[2] as usize));
            let policy = |x: &[f64]| all_pairs_vote(k, |i, j| bit(x[0] as usize, i, j));
            let lhs = policy_regret(&policy, &d);
            check.record(lhs, (k * (k - 1)) as f64 * binary_regret(&q, &pair_c));
        }
    }
    Ok(check)
}

/// One line of the regret-check summary.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteLine {
    pub name: &'static str,
    pub bound: &'static str,
    pub check: BoundCheck,
}

/// The enumerated bound checks, scaled down by `quick`.
pub fn regret_suites(quick: bool, seed: u64) -> Result<Vec<SuiteLine>> {
    let (contexts, random, trials) = if quick { (2, 200, 200) } else { (4, 2000, 1000) };
    let family = two_action_family(contexts, random, seed)?;
    let mut lines = vec![SuiteLine {
        name: "binary-offset",
        bound: "reg_eta <= reg_e",
        check: check_binary_offset(&family, 0.5, 1.0)?,
    }];
    lines.push(SuiteLine { name: "binary-offset-0", bound: "reg_eta <= 2 reg_e", check: compare_offsets(&family)?.0 });
    for k in [2, 3, 4, 8] {
        let mut t = TreeCheck::default();
        for n in 1..=3 {
            let part = check_offset_tree(k, n, trials, seed::derive(seed, (k * 10 + n) as u64))?;
            t.worst_case.merge(&part.worst_case);
            t.refined.merge(&part.refined);
        }
        lines.push(SuiteLine { name: tree_name(k), bound: "reg_eta <= (k-1) reg_e", check: t.worst_case });
        lines.push(SuiteLine { name: tree_name(k), bound: "reg_eta <= importance * reg_e", check: t.refined });
    }
    for k in [2, 3, 4] {
        lines.push(SuiteLine {
            name: "regression",
            bound: "reg_eta <= sqrt(2k reg_r)",
            check: check_regression(k, 3, trials, seed::derive(seed, 100 + k as u64))?,
        });
    }
    for k in [2, 3] {
        lines.push(SuiteLine {
            name: "iwc-all-pairs",
            bound: "reg_eta <= k(k-1) reg_e",
            check: check_iwc(k, 2, trials / 4, seed::derive(seed, 200 + k as u64))?,
        });
    }
    Ok(lines)
}

fn tree_name(k: usize) -> &'static str {
    match k {
        2 => "offset-tree k=2",
        3 => "offset-tree k=3",
        4 => "offset-tree k=4",
        _ => "offset-tree k=8",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiset_counts() {
        assert_eq!(multisets(25, 1).len(), 25);
        assert_eq!(multisets(25, 2).len(), 325);
        assert_eq!(multisets(4, 3).len(), 20);
    }

    #[test]
    fn tightness_is_exact() {
        for v in [0.0, 0.25, 0.5, 1.0] {
            let (eta, e) = tightness_fixture(v).unwrap();
            assert!((eta - v).abs() < 1e-12 && (e - v).abs() < 1e-12, "{v}: {eta} {e}");
        }
    }

    #[test]
    fn midpoint_meets_bound() {
        let (lhs, rhs) = midpoint_fixture(&[0.2, 0.8, 0.1], Action(0)).unwrap();
        assert!((lhs - 0.6).abs() < 1e-12);
        assert!((lhs - rhs).abs() < 1e-9);
        assert!(midpoint_fixture(&[0.5, 0.25, 0.75, 0.0], Action(1)).is_err());
    }

    #[test]
    fn quick_suites_hold() {
        for line in regret_suites(true, 1).unwrap() {
            assert!(line.check.holds(1e-9), "{} {}: {:?}", line.name, line.bound, line.check);
        }
    }
}
