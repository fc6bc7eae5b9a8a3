//! CART decision tree with Gini impurity, used as the bagging substrate.
//!
//! Split search is fully deterministic given the candidate feature order:
//! thresholds are midpoints between consecutive distinct values of a
//! feature, and equal-gain candidates resolve to the lowest feature index,
//! then the lowest threshold. A best split is accepted even at zero gain as
//! long as it is valid; nodes with no valid split become leaves.

use ndarray::ArrayView2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    /// Number of internal levels; `Some(0)` forces a single leaf.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        probs: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_classes: usize,
}

impl DecisionTree {
    /// Fits on the rows listed in `rows` (bootstrap indices may repeat).
    /// `n_split_features` candidate features are drawn per split from `rng`.
    pub fn fit(
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        rows: &[usize],
        n_classes: usize,
        params: &TreeParams,
        n_split_features: usize,
        rng: &mut ChaCha8Rng,
    ) -> DecisionTree {
        assert!(!rows.is_empty(), "cannot fit a tree on zero rows");
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            n_classes,
        };
        let mut builder = Builder {
            features,
            labels,
            n_classes,
            params,
            n_split_features: n_split_features.clamp(1, features.ncols()),
            rng,
        };
        builder.grow(&mut tree, rows.to_vec(), 0);
        tree
    }

    /// Class-frequency vector of the leaf reached by `x`.
    pub fn leaf_probs(&self, x: ndarray::ArrayView1<'_, f64>) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { probs } => return probs,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Builder<'a> {
    features: ArrayView2<'a, f64>,
    labels: &'a [usize],
    n_classes: usize,
    params: &'a TreeParams,
    n_split_features: usize,
    rng: &'a mut ChaCha8Rng,
}

struct Split {
    feature: usize,
    threshold: f64,
    left_rows: Vec<usize>,
    right_rows: Vec<usize>,
}

impl Builder<'_> {
    fn grow(&mut self, tree: &mut DecisionTree, rows: Vec<usize>, depth: usize) -> usize {
        let counts = self.class_counts(&rows);
        let pure = counts.iter().filter(|c| **c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        let too_small =
            rows.len() < self.params.min_samples_split || rows.len() < 2 * self.params.min_samples_leaf;

        if pure || depth_capped || too_small {
            return self.push_leaf(tree, &counts, rows.len());
        }
        match self.best_split(&rows, &counts) {
            None => self.push_leaf(tree, &counts, rows.len()),
            Some(split) => {
                let index = tree.nodes.len();
                tree.nodes.push(Node::Internal {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: usize::MAX,
                    right: usize::MAX,
                });
                let left = self.grow(tree, split.left_rows, depth + 1);
                let right = self.grow(tree, split.right_rows, depth + 1);
                if let Node::Internal {
                    left: l, right: r, ..
                } = &mut tree.nodes[index]
                {
                    *l = left;
                    *r = right;
                }
                index
            }
        }
    }

    fn push_leaf(&self, tree: &mut DecisionTree, counts: &[usize], n: usize) -> usize {
        let probs = counts.iter().map(|c| *c as f64 / n as f64).collect();
        tree.nodes.push(Node::Leaf { probs });
        tree.nodes.len() - 1
    }

    fn class_counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &r in rows {
            counts[self.labels[r]] += 1;
        }
        counts
    }

    fn best_split(&mut self, rows: &[usize], parent_counts: &[usize]) -> Option<Split> {
        let n = rows.len();
        let parent_gini = gini(parent_counts, n);
        let mut candidates = sample_features(self.rng, self.features.ncols(), self.n_split_features);
        candidates.sort_unstable();

        let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
        for &feature in &candidates {
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (self.features[(r, feature)], self.labels[r])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if sorted[0].0 == sorted[n - 1].0 {
                continue; // constant within the node
            }
            let mut left_counts = vec![0usize; parent_counts.len()];
            let mut nl = 0usize;
            for i in 0..n - 1 {
                left_counts[sorted[i].1] += 1;
                nl += 1;
                if sorted[i].0 == sorted[i + 1].0 {
                    continue; // not a value boundary
                }
                let nr = n - nl;
                if nl < self.params.min_samples_leaf || nr < self.params.min_samples_leaf {
                    continue;
                }
                let gini_left = gini(&left_counts, nl);
                let right_counts: Vec<usize> = parent_counts
                    .iter()
                    .zip(&left_counts)
                    .map(|(p, l)| p - l)
                    .collect();
                let gini_right = gini(&right_counts, nr);
                let weighted = (nl as f64 * gini_left + nr as f64 * gini_right) / n as f64;
                let gain = parent_gini - weighted;
                // strict improvement keeps the earliest candidate on ties:
                // lowest feature index, then lowest threshold
                if best.is_none() || gain > best.as_ref().unwrap().0 {
                    let threshold = 0.5 * (sorted[i].0 + sorted[i + 1].0);
                    best = Some((gain, feature, threshold));
                }
            }
        }

        best.map(|(_gain, feature, threshold)| {
            let mut left_rows = Vec::new();
            let mut right_rows = Vec::new();
            for &r in rows {
                if self.features[(r, feature)] <= threshold {
                    left_rows.push(r);
                } else {
                    right_rows.push(r);
                }
            }
            Split {
                feature,
                threshold,
                left_rows,
                right_rows,
            }
        })
    }
}

fn gini(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

/// Draws `m` distinct feature indices (unsorted).
fn sample_features(rng: &mut ChaCha8Rng, p: usize, m: usize) -> Vec<usize> {
    debug_assert!(m >= 1 && m <= p);
    // partial Fisher-Yates
    let mut pool: Vec<usize> = (0..p).collect();
    for i in 0..m {
        let j = rng.random_range(i..p);
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn zero_depth_gives_prior_leaf() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let labels = [0, 0, 1, 1];
        let params = TreeParams {
            max_depth: Some(0),
            ..TreeParams::default()
        };
        let rows: Vec<usize> = (0..4).collect();
        let tree = DecisionTree::fit(x.view(), &labels, &rows, 2, &params, 1, &mut rng());
        assert_eq!(tree.node_count(), 1);
        assert_eq!(tree.leaf_probs(x.row(0)), &[0.5, 0.5]);
    }

    #[test]
    fn separable_data_splits_cleanly() {
        let x = array![[0.0], [1.0], [10.0], [11.0]];
        let labels = [0, 0, 1, 1];
        let rows: Vec<usize> = (0..4).collect();
        let tree =
            DecisionTree::fit(x.view(), &labels, &rows, 2, &TreeParams::default(), 1, &mut rng());
        assert_eq!(tree.leaf_probs(array![0.5].view()), &[1.0, 0.0]);
        assert_eq!(tree.leaf_probs(array![10.5].view()), &[0.0, 1.0]);
        // midpoint threshold between 1 and 10
        assert_eq!(tree.leaf_probs(array![5.5].view()), &[1.0, 0.0]);
        assert_eq!(tree.leaf_probs(array![5.6].view()), &[0.0, 1.0]);
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let labels = [0, 1, 0, 1, 0, 1];
        let rows: Vec<usize> = (0..6).collect();
        let params = TreeParams {
            min_samples_leaf: 3,
            ..TreeParams::default()
        };
        let tree = DecisionTree::fit(x.view(), &labels, &rows, 2, &params, 1, &mut rng());
        // only the 3/3 boundary is admissible
        assert!(tree.depth() <= 1);
    }

    #[test]
    fn xor_is_separable_at_depth_two_with_all_features() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let labels = [0, 0, 1, 1];
        let rows: Vec<usize> = (0..4).collect();
        let params = TreeParams {
            max_depth: Some(2),
            ..TreeParams::default()
        };
        let tree = DecisionTree::fit(x.view(), &labels, &rows, 2, &params, 2, &mut rng());
        for (row, label) in labels.iter().enumerate() {
            let probs = tree.leaf_probs(x.row(row));
            assert_eq!(probs[*label], 1.0, "row {row}");
        }
    }

    #[test]
    fn fit_is_deterministic_for_equal_seeds() {
        let x = array![
            [0.3, 1.2],
            [0.1, 0.8],
            [0.9, 0.1],
            [0.5, 0.55],
            [0.7, 0.3],
            [0.2, 0.9]
        ];
        let labels = [0, 0, 1, 1, 1, 0];
        let rows: Vec<usize> = (0..6).collect();
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let t1 = DecisionTree::fit(x.view(), &labels, &rows, 2, &TreeParams::default(), 1, &mut r1);
        let t2 = DecisionTree::fit(x.view(), &labels, &rows, 2, &TreeParams::default(), 1, &mut r2);
        for row in 0..6 {
            assert_eq!(t1.leaf_probs(x.row(row)), t2.leaf_probs(x.row(row)));
        }
        assert_eq!(t1.node_count(), t2.node_count());
    }
}
