//! Random forest of Gini decision trees.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClassifierError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure.
    #[serde(default)]
    pub max_depth: Option<usize>,
    /// Features tried per split; `None` means ⌈√d⌉.
    #[serde(default)]
    pub features_per_split: Option<usize>,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
}

fn default_trees() -> usize {
    100
}

fn default_true() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: None, features_per_split: None, bootstrap: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { weak: bool },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> bool {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { weak } => return *weak,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

fn gini(weak: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = weak as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    mtry: usize,
    max_depth: Option<usize>,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let n = idx.len();
        let weak = idx.iter().filter(|&&i| self.y[i]).count();
        let id = self.nodes.len();
        let leaf = Node::Leaf { weak: 2 * weak >= n };
        self.nodes.push(leaf.clone());
        if weak == 0 || weak == n || self.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let d = self.x[0].len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(n);
        for feature in sample(rng, d, self.mtry.min(d)).into_iter() {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x[i][feature], self.y[i])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_weak = 0;
            for pos in 0..n - 1 {
                if pairs[pos].1 {
                    left_weak += 1;
                }
                let v = pairs[pos].0;
                if v == pairs[pos + 1].0 {
                    continue;
                }
                let nl = pos + 1;
                let nr = n - nl;
                let impurity = (nl as f64 * gini(left_weak, nl) + nr as f64 * gini(weak - left_weak, nr)) / n as f64;
                if best.is_none_or(|(b, _, _)| impurity < b) {
                    best = Some((impurity, feature, v));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let split = partition(idx, |i| self.x[i][feature] <= threshold);
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut k = 0;
    for j in 0..idx.len() {
        if pred(idx[j]) {
            idx.swap(k, j);
            k += 1;
        }
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    /// Out-of-bag accuracy, when any sample was left out of some tree.
    pub oob_accuracy: Option<f64>,
}

fn tree_seed(seed: u64, tree: usize) -> u64 {
    seed ^ (tree as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl RandomForest {
    /// Fits on rows `x` (all the same width) with labels `y` (true = weak).
    pub fn fit(x: &[Vec<f64>], y: &[bool], params: &ForestParams, seed: u64) -> Result<Self, ClassifierError> {
        if x.is_empty() {
            return Err(ClassifierError::Empty);
        }
        let d = x[0].len();
        if d == 0 {
            return Err(ClassifierError::NoFeatures);
        }
        if params.n_trees == 0 {
            return Err(ClassifierError::InvalidSpec("n_trees must be at least 1".into()));
        }
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            return Err(ClassifierError::SingleClass);
        }
        let n = x.len();
        let mtry = params.features_per_split.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).max(1);
        let grown: Vec<(Tree, Vec<bool>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, t));
                let mut in_bag = vec![!params.bootstrap; n];
                let mut idx: Vec<usize> = if params.bootstrap {
                    (0..n)
                        .map(|_| {
                            let i = rng.random_range(0..n);
                            in_bag[i] = true;
                            i
                        })
                        .collect()
                } else {
                    (0..n).collect()
                };
                let mut grower = Grower { x, y, mtry, max_depth: params.max_depth, nodes: Vec::new() };
                grower.grow(&mut idx, 0, &mut rng);
                (Tree { nodes: grower.nodes }, in_bag)
            })
            .collect();
        let mut votes = vec![(0usize, 0usize); n];
        for (tree, in_bag) in &grown {
            for i in (0..n).filter(|&i| !in_bag[i]) {
                if tree.predict(&x[i]) {
                    votes[i].0 += 1;
                }
                votes[i].1 += 1;
            }
        }
        let (mut counted, mut correct) = (0usize, 0usize);
        for (&(weak, total), &truth) in votes.iter().zip(y) {
            if total > 0 {
                counted += 1;
                if (2 * weak >= total) == truth {
                    correct += 1;
                }
            }
        }
        let oob_accuracy = (counted > 0).then(|| correct as f64 / counted as f64);
        Ok(Self { trees: grown.into_iter().map(|g| g.0).collect(), oob_accuracy })
    }

    /// Majority vote of the trees; a tied vote predicts weak.
    pub fn predict(&self, x: &[f64]) -> bool {
        let weak = self.trees.iter().filter(|t| t.predict(x)).count();
        2 * weak >= self.trees.len()
    }
}
