//! CART decision trees and the splitter machinery shared with the ensemble
//! methods.
//!
//! Splits are found on presorted per-feature index lists that are
//! stable-partitioned down the tree, so each node's search costs O(F n)
//! instead of a per-node sort. Lists may carry repeated sample ids, which is
//! how bootstrap resampling enters without copying rows.

use super::{Normalizer, TreeHyper, TrainData};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { probs: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// Per-feature sample ids in ascending feature order.
#[derive(Clone, Debug)]
pub(crate) struct FeatureLists {
    pub lists: Vec<Vec<u32>>,
}

impl FeatureLists {
    /// Sorts every feature column once. Ties order by sample id so the
    /// result is deterministic.
    pub fn presort(x: &[f64], stride: usize, n: usize) -> FeatureLists {
        let lists = (0..stride)
            .map(|j| {
                let mut ids: Vec<u32> = (0..n as u32).collect();
                ids.sort_unstable_by(|&a, &b| {
                    x[a as usize * stride + j]
                        .total_cmp(&x[b as usize * stride + j])
                        .then(a.cmp(&b))
                });
                ids
            })
            .collect();
        FeatureLists { lists }
    }

    /// Expands the sorted lists by per-sample multiplicities (bootstrap
    /// counts). Repeats stay adjacent, preserving sort order.
    pub fn expand(&self, mult: &[u32]) -> FeatureLists {
        let total: usize = mult.iter().map(|&m| m as usize).sum();
        let lists = self
            .lists
            .iter()
            .map(|list| {
                let mut out = Vec::with_capacity(total);
                for &id in list {
                    for _ in 0..mult[id as usize] {
                        out.push(id);
                    }
                }
                out
            })
            .collect();
        FeatureLists { lists }
    }

    pub fn len(&self) -> usize {
        self.lists[0].len()
    }

    /// Stable partition of every list by a per-sample predicate.
    fn partition(&self, go_left: impl Fn(u32) -> bool) -> (FeatureLists, FeatureLists) {
        let mut left = Vec::with_capacity(self.lists.len());
        let mut right = Vec::with_capacity(self.lists.len());
        for list in &self.lists {
            let mut l = Vec::new();
            let mut r = Vec::new();
            for &id in list {
                if go_left(id) {
                    l.push(id);
                } else {
                    r.push(id);
                }
            }
            left.push(l);
            right.push(r);
        }
        (FeatureLists { lists: left }, FeatureLists { lists: right })
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Best Gini split over the given features (ascending order fixes ties to
/// the lowest feature, then the first = lowest threshold). The score being
/// maximized is sum_k c_k^2/n summed over both children; a split must beat
/// the parent by more than a scale-relative epsilon to count.
fn best_gini_split(
    x: &[f64],
    stride: usize,
    labels: &[usize],
    k: usize,
    lists: &FeatureLists,
    features: &[usize],
    min_leaf: usize,
    parent_counts: &[f64],
) -> Option<Candidate> {
    let n = lists.len();
    let nf = n as f64;
    let parent_score: f64 = parent_counts.iter().map(|c| c * c).sum::<f64>() / nf;
    let eps = 1e-9 * nf;
    let mut best: Option<Candidate> = None;
    let mut left = vec![0.0; k];
    for &fi in features {
        let list = &lists.lists[fi];
        left.iter_mut().for_each(|c| *c = 0.0);
        let mut n_left = 0usize;
        let mut left_sq = 0.0;
        for w in 0..n - 1 {
            let id = list[w] as usize;
            let c = labels[id];
            // Maintain sum of squared counts incrementally.
            left_sq += 2.0 * left[c] + 1.0;
            left[c] += 1.0;
            n_left += 1;
            let v = x[id * stride + fi];
            let v_next = x[list[w + 1] as usize * stride + fi];
            if v_next <= v || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let mut right_sq = 0.0;
            for (pc, lc) in parent_counts.iter().zip(&left) {
                let rc = pc - lc;
                right_sq += rc * rc;
            }
            let score = left_sq / n_left as f64 + right_sq / (n - n_left) as f64;
            if score > parent_score + eps && best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(Candidate { feature: fi, threshold: 0.5 * (v + v_next), score });
            }
        }
    }
    best
}

fn class_counts(labels: &[usize], k: usize, list: &[u32]) -> Vec<f64> {
    let mut counts = vec![0.0; k];
    for &id in list {
        counts[labels[id as usize]] += 1.0;
    }
    counts
}

pub(crate) struct ClassTreeConfig {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features sampled per split (forests); `None` searches all features.
    pub feature_subset: Option<usize>,
}

/// Grows a classification tree. Returns the node arena plus per-node
/// `(sample count, class proportions)` statistics for pruning.
pub(crate) fn grow_class_tree(
    x: &[f64],
    stride: usize,
    labels: &[usize],
    k: usize,
    root: FeatureLists,
    cfg: &ClassTreeConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> (Vec<TreeNode>, Vec<(f64, Vec<f64>)>) {
    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { probs: Vec::new() }];
    let mut stats: Vec<(f64, Vec<f64>)> = vec![(0.0, Vec::new())];
    let mut stack = vec![(root, 0usize, 0usize)];
    let mut all_features: Vec<usize> = (0..stride).collect();
    let mut rng = rng;
    while let Some((lists, depth, slot)) = stack.pop() {
        let n = lists.len();
        let counts = class_counts(labels, k, &lists.lists[0]);
        let probs: Vec<f64> = counts.iter().map(|c| c / n as f64).collect();
        stats[slot] = (n as f64, probs.clone());
        let pure = counts.iter().any(|&c| c as usize == n);
        let depth_cap = cfg.max_depth.is_some_and(|d| depth >= d);
        let mut chosen = None;
        if !pure && !depth_cap && n >= 2 * cfg.min_leaf {
            let features: &[usize] = match cfg.feature_subset {
                Some(m) if m < stride => {
                    let r = rng.as_deref_mut().expect("feature subsetting needs an rng");
                    for i in 0..m {
                        let j = r.random_range(i..stride);
                        all_features.swap(i, j);
                    }
                    all_features[..m].sort_unstable();
                    &all_features[..m]
                }
                _ => &all_features,
            };
            chosen = best_gini_split(x, stride, labels, k, &lists, features, cfg.min_leaf, &counts);
        }
        match chosen {
            None => nodes[slot] = TreeNode::Leaf { probs },
            Some(c) => {
                let (l, r) =
                    lists.partition(|id| x[id as usize * stride + c.feature] <= c.threshold);
                let li = nodes.len();
                nodes.push(TreeNode::Leaf { probs: Vec::new() });
                stats.push((0.0, Vec::new()));
                let ri = nodes.len();
                nodes.push(TreeNode::Leaf { probs: Vec::new() });
                stats.push((0.0, Vec::new()));
                nodes[slot] = TreeNode::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: li,
                    right: ri,
                };
                stack.push((r, depth + 1, ri));
                stack.push((l, depth + 1, li));
            }
        }
    }
    (nodes, stats)
}

/// Weakest-link cost-complexity pruning. Repeatedly collapses the internal
/// node with the smallest per-leaf error increase until that increase
/// exceeds `alpha`. Node cost is the resubstitution misclassification rate
/// weighted by the node's share of the training data.
pub(crate) fn prune(
    nodes: &mut Vec<TreeNode>,
    stats: &[(f64, Vec<f64>)],
    alpha: f64,
) {
    let total = stats[0].0;
    let node_cost = |i: usize| {
        let (n, probs) = &stats[i];
        let top = probs.iter().cloned().fold(0.0f64, f64::max);
        (n / total) * (1.0 - top)
    };
    loop {
        // Postorder aggregates: leaves(t) and summed leaf cost R(T_t).
        let m = nodes.len();
        let mut leaves = vec![0usize; m];
        let mut subtree_cost = vec![0.0f64; m];
        let mut order: Vec<usize> = Vec::with_capacity(m);
        let mut walk = vec![0usize];
        while let Some(i) = walk.pop() {
            order.push(i);
            if let TreeNode::Split { left, right, .. } = nodes[i] {
                walk.push(left);
                walk.push(right);
            }
        }
        for &i in order.iter().rev() {
            match nodes[i] {
                TreeNode::Leaf { .. } => {
                    leaves[i] = 1;
                    subtree_cost[i] = node_cost(i);
                }
                TreeNode::Split { left, right, .. } => {
                    leaves[i] = leaves[left] + leaves[right];
                    subtree_cost[i] = subtree_cost[left] + subtree_cost[right];
                }
            }
        }
        let mut weakest: Option<(usize, f64)> = None;
        for &i in &order {
            if let TreeNode::Split { .. } = nodes[i] {
                let g = (node_cost(i) - subtree_cost[i]) / (leaves[i] - 1) as f64;
                if weakest.is_none_or(|(_, wg)| g < wg) {
                    weakest = Some((i, g));
                }
            }
        }
        match weakest {
            Some((i, g)) if g <= alpha => {
                nodes[i] = TreeNode::Leaf { probs: stats[i].1.clone() };
            }
            _ => break,
        }
    }
    // Drop unreachable nodes so the serialized tree is the pruned tree.
    compact(nodes);
}

fn compact(nodes: &mut Vec<TreeNode>) {
    let mut map = vec![usize::MAX; nodes.len()];
    let mut out = Vec::new();
    let mut walk = vec![0usize];
    let mut keep = Vec::new();
    while let Some(i) = walk.pop() {
        if map[i] == usize::MAX {
            map[i] = out.len();
            out.push(TreeNode::Leaf { probs: Vec::new() });
            keep.push(i);
            if let TreeNode::Split { left, right, .. } = nodes[i] {
                walk.push(left);
                walk.push(right);
            }
        }
    }
    for &i in &keep {
        out[map[i]] = match &nodes[i] {
            TreeNode::Leaf { probs } => TreeNode::Leaf { probs: probs.clone() },
            TreeNode::Split { feature, threshold, left, right } => TreeNode::Split {
                feature: *feature,
                threshold: *threshold,
                left: map[*left],
                right: map[*right],
            },
        };
    }
    *nodes = out;
}

pub(crate) fn walk<'a>(nodes: &'a [TreeNode], z: &[f64]) -> &'a [f64] {
    let mut i = 0;
    loop {
        match &nodes[i] {
            TreeNode::Leaf { probs } => return probs,
            TreeNode::Split { feature, threshold, left, right } => {
                i = if z[*feature] <= *threshold { *left } else { *right };
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub normalizer: Normalizer,
    pub nodes: Vec<TreeNode>,
    pub k: usize,
    pub f: usize,
}

impl TreeModel {
    pub(crate) fn proba(&self, x: &[f64]) -> Vec<f64> {
        walk(&self.nodes, &self.normalizer.transform(x)).to_vec()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

pub(crate) fn fit(data: &TrainData, params: &TreeHyper, normalizer: Normalizer) -> TreeModel {
    let root = FeatureLists::presort(&data.x, data.f, data.n);
    let cfg = ClassTreeConfig {
        max_depth: params.max_depth,
        min_leaf: params.min_samples_leaf.max(1),
        feature_subset: None,
    };
    let (mut nodes, stats) =
        grow_class_tree(&data.x, data.f, &data.labels, data.k, root, &cfg, None);
    if params.ccp_alpha > 0.0 {
        prune(&mut nodes, &stats, params.ccp_alpha);
    }
    TreeModel { normalizer, nodes, k: data.k, f: data.f }
}

/// Best variance-reduction split; maximizes sum^2/n over both children.
fn best_reg_split(
    x: &[f64],
    stride: usize,
    targets: &[f64],
    lists: &FeatureLists,
    min_leaf: usize,
) -> Option<Candidate> {
    let n = lists.len();
    let list0 = &lists.lists[0];
    let total: f64 = list0.iter().map(|&id| targets[id as usize]).sum();
    let tss: f64 = list0.iter().map(|&id| targets[id as usize].powi(2)).sum();
    let parent_score = total * total / n as f64;
    let eps = 1e-12 * tss.max(f64::MIN_POSITIVE);
    let mut best: Option<Candidate> = None;
    for (fi, list) in lists.lists.iter().enumerate() {
        let mut left_sum = 0.0;
        for w in 0..n - 1 {
            let id = list[w] as usize;
            left_sum += targets[id];
            let n_left = w + 1;
            let v = x[id * stride + fi];
            let v_next = x[list[w + 1] as usize * stride + fi];
            if v_next <= v || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / n_left as f64
                + right_sum * right_sum / (n - n_left) as f64;
            if score > parent_score + eps && best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(Candidate { feature: fi, threshold: 0.5 * (v + v_next), score });
            }
        }
    }
    best
}

/// Grows a regression tree on `targets`; `leaf_value` maps the sample ids
/// reaching a leaf to its output (mean for plain regression, a different
/// functional for boosting updates).
pub(crate) fn grow_reg_tree(
    x: &[f64],
    stride: usize,
    targets: &[f64],
    root: FeatureLists,
    max_depth: usize,
    min_leaf: usize,
    leaf_value: impl Fn(&[u32]) -> f64,
) -> Vec<RegNode> {
    let mut nodes: Vec<RegNode> = vec![RegNode::Leaf { value: 0.0 }];
    let mut stack = vec![(root, 0usize, 0usize)];
    while let Some((lists, depth, slot)) = stack.pop() {
        let n = lists.len();
        let chosen = if depth < max_depth && n >= 2 * min_leaf {
            best_reg_split(x, stride, targets, &lists, min_leaf)
        } else {
            None
        };
        match chosen {
            None => nodes[slot] = RegNode::Leaf { value: leaf_value(&lists.lists[0]) },
            Some(c) => {
                let (l, r) =
                    lists.partition(|id| x[id as usize * stride + c.feature] <= c.threshold);
                let li = nodes.len();
                nodes.push(RegNode::Leaf { value: 0.0 });
                let ri = nodes.len();
                nodes.push(RegNode::Leaf { value: 0.0 });
                nodes[slot] = RegNode::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: li,
                    right: ri,
                };
                stack.push((r, depth + 1, ri));
                stack.push((l, depth + 1, li));
            }
        }
    }
    nodes
}

pub(crate) fn reg_value(nodes: &[RegNode], z: &[f64]) -> f64 {
    let mut i = 0;
    loop {
        match &nodes[i] {
            RegNode::Leaf { value } => return *value,
            RegNode::Split { feature, threshold, left, right } => {
                i = if z[*feature] <= *threshold { *left } else { *right };
            }
        }
    }
}
