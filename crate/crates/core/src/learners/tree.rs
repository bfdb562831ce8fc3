use serde::{Deserialize, Serialize};

use super::Sample;
use crate::types::Posterior;

/// Binary tree over axis-aligned thresholds; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// `x[feature] <= threshold` descends left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<usize>,
        posterior: Vec<f64>,
    },
}

impl Tree {
    pub(super) fn posterior(&self, x: &[f64]) -> Posterior {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { posterior, .. } => {
                    return Posterior::from_weights(posterior.clone());
                }
            }
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Laplace-smoothed class frequencies `(n_c + 1) / (n + C)`.
pub(crate) fn laplace_posterior(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    let denom = (n + counts.len()) as f64;
    counts.iter().map(|&c| (c as f64 + 1.0) / denom).collect()
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

struct Builder<'a, 'b> {
    data: &'a [Sample<'b>],
    classes: usize,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

pub(super) fn fit(classes: usize, data: &[Sample<'_>], max_depth: usize, min_leaf: usize) -> Tree {
    let mut builder = Builder { data, classes, max_depth, min_leaf, nodes: Vec::new() };
    let all: Vec<usize> = (0..data.len()).collect();
    builder.grow(all, 0);
    Tree { nodes: builder.nodes }
}

impl Builder<'_, '_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &i in idx {
            counts[self.data[i].label.0] += 1;
        }
        counts
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure || depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            None
        } else {
            self.best_split(&idx, &counts)
        };
        let at = self.nodes.len();
        match split {
            None => {
                let posterior = laplace_posterior(&counts);
                self.nodes.push(TreeNode::Leaf { counts, posterior });
            }
            Some(best) => {
                // Placeholder until both children exist.
                self.nodes.push(TreeNode::Leaf { counts: Vec::new(), posterior: Vec::new() });
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.into_iter().partition(|&i| self.data[i].features[best.feature] <= best.threshold);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[at] = TreeNode::Split { feature: best.feature, threshold: best.threshold, left, right };
            }
        }
        at
    }

    /// Highest information gain over all features and midpoints. Zero-gain
    /// splits are accepted so that XOR-like structure can still be carved.
    fn best_split(&self, idx: &[usize], counts: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let parent = entropy(counts, n);
        let dim = self.data[idx[0]].features.len();
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for feature in 0..dim {
            let value = |i: usize| self.data[i].features[feature];
            order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
            let mut left = vec![0usize; self.classes];
            for pos in 0..n - 1 {
                left[self.data[order[pos]].label.0] += 1;
                let nl = pos + 1;
                let nr = n - nl;
                let (lo, hi) = (value(order[pos]), value(order[pos + 1]));
                if lo == hi || nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let child = (nl as f64 * entropy(&left, nl) + nr as f64 * entropy(&right, nr)) / n as f64;
                let gain = parent - child;
                if best.as_ref().is_none_or(|b| gain > b.gain + 1e-12) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit { feature, threshold, gain });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::super::{train, Classifier, LearnerKind, ModelParams};
    use super::*;
    use crate::types::ClassId;

    #[test]
    fn depth_two_tree_fits_xor() {
        let pts = [([0.0, 0.0], 0), ([1.0, 1.0], 0), ([0.0, 1.0], 1), ([1.0, 0.0], 1)];
        let data: Vec<_> = pts.iter().map(|(x, y)| Sample::new(x, ClassId(*y))).collect();
        for depth in 2..5 {
            let model = train(&LearnerKind::DecisionTree { max_depth: depth, min_leaf: 1 }, 2, &data, 0).unwrap();
            for (x, y) in &pts {
                assert_eq!(model.predict(x).unwrap(), ClassId(*y));
            }
        }
    }

    #[test]
    fn leaf_posterior_is_laplace_smoothed() {
        let x = [1.0];
        let data = [
            Sample::new(&x, ClassId(1)),
            Sample::new(&x, ClassId(1)),
            Sample::new(&x, ClassId(1)),
            Sample::new(&x, ClassId(0)),
        ];
        let model = train(&LearnerKind::decision_tree(), 2, &data, 0).unwrap();
        let p = model.predict_posterior(&x).unwrap();
        assert!((p.probs()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.probs()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn depth_and_leaf_bounds_hold() {
        let rows: Vec<(Vec<f64>, ClassId)> = (0..500)
            .map(|i| {
                let a = ((i * 37) % 101) as f64;
                let b = ((i * 53) % 97) as f64;
                (vec![a, b], ClassId(usize::from(((a * b) as usize).is_multiple_of(3))))
            })
            .collect();
        let data: Vec<_> = rows.iter().map(|(x, y)| Sample::new(x, *y)).collect();
        let model = train(&LearnerKind::DecisionTree { max_depth: 3, min_leaf: 5 }, 2, &data, 0).unwrap();
        let ModelParams::DecisionTree(tree) = model.params() else { unreachable!() };
        assert!(tree.depth() <= 3);
        for node in &tree.nodes {
            if let TreeNode::Leaf { counts, posterior } = node {
                assert!(counts.iter().sum::<usize>() >= 5);
                assert!(posterior.iter().all(|&p| p > 0.0 && p < 1.0));
            }
        }
    }
}
