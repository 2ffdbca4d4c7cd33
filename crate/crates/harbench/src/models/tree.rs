//! CART decision trees and bagged random forests.
//!
//! Splits are axis-aligned thresholds at midpoints of sorted unique values,
//! chosen by Gini or entropy impurity decrease; ties go to the first
//! candidate (lowest feature index, lowest threshold). Leaves predict the
//! majority class, ties to the lowest class index.

use crate::rng::stream;
use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitCriterion {
    Gini,
    Entropy,
}

impl SplitCriterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitCriterion::Gini => "gini",
            SplitCriterion::Entropy => "entropy",
        }
    }
}

impl Serialize for SplitCriterion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub criterion: SplitCriterion,
    /// Features examined per split; `None` = all features.
    pub mtry: Option<usize>,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    /// Per-feature accumulated weighted impurity decrease.
    pub importances: Vec<f64>,
}

fn impurity(counts: &[usize], total: usize, criterion: SplitCriterion) -> f64 {
    let n = total as f64;
    match criterion {
        SplitCriterion::Gini => {
            1.0 - counts
                .iter()
                .map(|&c| {
                    let p = c as f64 / n;
                    p * p
                })
                .sum::<f64>()
        }
        SplitCriterion::Entropy => counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum(),
    }
}

fn majority(counts: &[usize]) -> usize {
    counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c)
        .expect("at least one class")
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    n_classes: usize,
    n_total: f64,
    cfg: TreeConfig,
    nodes: Vec<Node>,
    importances: Vec<f64>,
}

impl<'a> Builder<'a> {
    fn candidate_features(&self, rng: &mut Option<&mut ChaCha8Rng>) -> Vec<usize> {
        let f = self.x.ncols();
        match (self.cfg.mtry, rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < f => {
                // partial Fisher-Yates, then ascending for deterministic ties
                let mut idx: Vec<usize> = (0..f).collect();
                for i in 0..m {
                    let j = rng.gen_range(i..f);
                    idx.swap(i, j);
                }
                let mut chosen: Vec<usize> = idx[..m].to_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..f).collect(),
        }
    }

    fn build(&mut self, rows: &[usize], depth: usize, rng: &mut Option<&mut ChaCha8Rng>) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &r in rows {
            counts[self.y[r]] += 1;
        }
        let node_impurity = impurity(&counts, rows.len(), self.cfg.criterion);
        let at_depth_limit = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if rows.len() < 2 || node_impurity <= 0.0 || at_depth_limit {
            self.nodes.push(Node::Leaf {
                class: majority(&counts),
            });
            return self.nodes.len() - 1;
        }

        let mut best: Option<(f64, usize, f64)> = None; // (decrease, feature, threshold)
        for feature in self.candidate_features(rng) {
            let mut order: Vec<usize> = rows.to_vec();
            order.sort_by(|&a, &b| {
                self.x[[a, feature]]
                    .partial_cmp(&self.x[[b, feature]])
                    .expect("finite feature values")
            });
            let mut left_counts = vec![0usize; self.n_classes];
            for i in 1..order.len() {
                left_counts[self.y[order[i - 1]]] += 1;
                let prev = self.x[[order[i - 1], feature]];
                let here = self.x[[order[i], feature]];
                if here <= prev {
                    continue;
                }
                let n_left = i;
                let n_right = order.len() - i;
                let right_counts: Vec<usize> = counts
                    .iter()
                    .zip(&left_counts)
                    .map(|(&t, &l)| t - l)
                    .collect();
                let child = (n_left as f64 * impurity(&left_counts, n_left, self.cfg.criterion)
                    + n_right as f64 * impurity(&right_counts, n_right, self.cfg.criterion))
                    / rows.len() as f64;
                let decrease = node_impurity - child;
                if best.is_none_or(|(b, _, _)| decrease > b + 1e-15) {
                    best = Some((decrease, feature, (prev + here) / 2.0));
                }
            }
        }

        match best {
            Some((decrease, feature, threshold)) if decrease > 1e-12 => {
                self.importances[feature] += rows.len() as f64 / self.n_total * decrease;
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| self.x[[r, feature]] <= threshold);
                let placeholder = self.nodes.len();
                self.nodes.push(Node::Leaf { class: 0 });
                let left = self.build(&left_rows, depth + 1, rng);
                let right = self.build(&right_rows, depth + 1, rng);
                self.nodes[placeholder] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                placeholder
            }
            _ => {
                self.nodes.push(Node::Leaf {
                    class: majority(&counts),
                });
                self.nodes.len() - 1
            }
        }
    }
}

impl DecisionTree {
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
        cfg: &TreeConfig,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> DecisionTree {
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let mut builder = Builder {
            x: x.view(),
            y,
            n_classes,
            n_total: rows.len() as f64,
            cfg: cfg.clone(),
            nodes: Vec::new(),
            importances: vec![0.0; x.ncols()],
        };
        let root = builder.build(&rows, 0, &mut rng);
        debug_assert_eq!(root, 0);
        DecisionTree {
            nodes: builder.nodes,
            importances: builder.importances,
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    /// Features per split; `None` = floor(sqrt(F)), at least 1.
    pub mtry: Option<usize>,
    /// Disabled only by tests that compare a 1-tree forest to a plain tree.
    pub bootstrap: bool,
    pub criterion: SplitCriterion,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            mtry: None,
            bootstrap: true,
            criterion: SplitCriterion::Gini,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: usize,
}

impl RandomForest {
    /// Trees draw their bootstrap sample and per-split feature subsets from
    /// streams derived from `(seed, tag, tree index)`, so training is
    /// deterministic no matter how the trees are scheduled.
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
        cfg: &ForestConfig,
        seed: u64,
        tag: &str,
    ) -> RandomForest {
        let n = x.nrows();
        let mtry = cfg
            .mtry
            .unwrap_or_else(|| (x.ncols() as f64).sqrt().floor().max(1.0) as usize);
        let tree_cfg = TreeConfig {
            max_depth: cfg.max_depth,
            criterion: cfg.criterion,
            mtry: Some(mtry.min(x.ncols())),
        };
        let trees: Vec<DecisionTree> = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(seed, &format!("{tag}:tree:{t}"));
                let (bx, by): (Vec<usize>, ()) = if cfg.bootstrap {
                    let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                    (rows, ())
                } else {
                    ((0..n).collect(), ())
                };
                let _ = by;
                let mut sampled = ndarray::Array2::zeros((bx.len(), x.ncols()));
                let mut sampled_y = Vec::with_capacity(bx.len());
                for (i, &r) in bx.iter().enumerate() {
                    sampled.row_mut(i).assign(&x.row(r));
                    sampled_y.push(y[r]);
                }
                DecisionTree::fit(sampled.view(), &sampled_y, n_classes, &tree_cfg, Some(&mut rng))
            })
            .collect();
        RandomForest { trees, n_classes }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for tree in &self.trees {
            votes[tree.predict_row(row)] += 1;
        }
        majority(&votes)
    }

    /// Mean over trees of the per-tree importances, each normalized to sum
    /// to 1 (all-zero trees contribute zeros).
    pub fn feature_importances(&self) -> Vec<f64> {
        let f = self.trees.first().map(|t| t.importances.len()).unwrap_or(0);
        let mut acc = vec![0.0; f];
        for tree in &self.trees {
            let sum: f64 = tree.importances.iter().sum();
            if sum > 0.0 {
                for (a, &v) in acc.iter_mut().zip(&tree.importances) {
                    *a += v / sum;
                }
            }
        }
        for a in acc.iter_mut() {
            *a /= self.trees.len() as f64;
        }
        acc
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use ndarray::Array2;

    /// XOR clusters: class 0 at (0,0) and (1,1), class 1 at (0,1) and (1,0).
    pub(crate) fn xor_data(per_cluster: usize) -> (Array2<f64>, Vec<usize>) {
        let n = per_cluster * 4;
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        let centers = [(0.0, 0.0, 0), (1.0, 1.0, 0), (0.0, 1.0, 1), (1.0, 0.0, 1)];
        let mut i = 0;
        for &(cx, cy, label) in &centers {
            for j in 0..per_cluster {
                // deterministic jitter
                let a = ((i * 31 + j * 7) % 17) as f64 / 17.0 * 0.2 - 0.1;
                let b = ((i * 13 + j * 11) % 19) as f64 / 19.0 * 0.2 - 0.1;
                x[[i, 0]] = cx + a;
                x[[i, 1]] = cy + b;
                y.push(label);
                i += 1;
            }
        }
        (x, y)
    }

    #[test]
    fn tree_solves_xor() {
        let (x, y) = xor_data(20);
        for criterion in [SplitCriterion::Gini, SplitCriterion::Entropy] {
            let tree = DecisionTree::fit(
                x.view(),
                &y,
                2,
                &TreeConfig {
                    max_depth: Some(4),
                    criterion,
                    mtry: None,
                },
                None,
            );
            let correct = (0..x.nrows())
                .filter(|&r| tree.predict_row(x.row(r)) == y[r])
                .count();
            assert!(correct as f64 / x.nrows() as f64 >= 0.95);
            assert!(tree.depth() >= 2, "XOR needs at least two levels");
        }
    }

    #[test]
    fn depth_limit_is_honored() {
        let (x, y) = xor_data(20);
        let tree = DecisionTree::fit(
            x.view(),
            &y,
            2,
            &TreeConfig {
                max_depth: Some(1),
                criterion: SplitCriterion::Gini,
                mtry: None,
            },
            None,
        );
        assert!(tree.depth() <= 1);
    }

    #[test]
    fn pure_node_becomes_leaf() {
        let x = Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = vec![1, 1, 1, 1];
        let tree = DecisionTree::fit(
            x.view(),
            &y,
            2,
            &TreeConfig {
                max_depth: None,
                criterion: SplitCriterion::Gini,
                mtry: None,
            },
            None,
        );
        assert_eq!(tree.depth(), 0);
        assert_eq!(tree.predict_row(x.row(0)), 1);
    }

    #[test]
    fn forest_importances_sum_to_one_on_informative_data() {
        let (x, y) = xor_data(15);
        let forest = RandomForest::fit(
            x.view(),
            &y,
            2,
            &ForestConfig::default(),
            42,
            "test-forest",
        );
        let imp = forest.feature_importances();
        let sum: f64 = imp.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "importances sum to {sum}");
    }

    #[test]
    fn single_tree_full_features_no_bootstrap_equals_plain_tree() {
        let (x, y) = xor_data(15);
        let forest = RandomForest::fit(
            x.view(),
            &y,
            2,
            &ForestConfig {
                n_trees: 1,
                max_depth: None,
                mtry: Some(2),
                bootstrap: false,
                criterion: SplitCriterion::Gini,
            },
            42,
            "test-forest",
        );
        let tree = DecisionTree::fit(
            x.view(),
            &y,
            2,
            &TreeConfig {
                max_depth: None,
                criterion: SplitCriterion::Gini,
                mtry: None,
            },
            None,
        );
        for r in 0..x.nrows() {
            assert_eq!(forest.predict_row(x.row(r)), tree.predict_row(x.row(r)));
        }
    }

    #[test]
    fn forest_training_is_deterministic() {
        let (x, y) = xor_data(10);
        let a = RandomForest::fit(x.view(), &y, 2, &ForestConfig::default(), 7, "rf");
        let b = RandomForest::fit(x.view(), &y, 2, &ForestConfig::default(), 7, "rf");
        for r in 0..x.nrows() {
            assert_eq!(a.predict_row(x.row(r)), b.predict_row(x.row(r)));
        }
        assert_eq!(a.feature_importances(), b.feature_importances());
    }
}
