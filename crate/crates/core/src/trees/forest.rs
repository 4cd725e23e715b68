//! Random forest with Gini splits and bootstrap aggregation.
//!
//! Each tree trains on a with-replacement resample of the same size, using
//! exact greedy Gini splits over a random feature subset drawn per node.
//! Tree seeds derive from the model seed, so forests are reproducible and
//! trees may be built in parallel and assembled in seed order.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, LeafCounts, Node};
use super::{check_training_inputs, TreeError};
use crate::seed::derive_seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfHyper {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or smaller than `min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per node; `None` means `max(1, floor(sqrt(F)))`.
    pub feature_subsample: Option<usize>,
    pub seed: u64,
}

impl Default for RfHyper {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            feature_subsample: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfModel {
    pub trees: Vec<DecisionTree<LeafCounts>>,
    pub bootstrap_seeds: Vec<u64>,
    pub n_features: usize,
    pub hyper: RfHyper,
}

pub fn train_rf(x: &Tensor, y: &[f64], hyper: &RfHyper) -> Result<RfModel, TreeError> {
    let (n, width) = check_training_inputs(x, y)?;
    let k_features = hyper
        .feature_subsample
        .unwrap_or_else(|| ((width as f64).sqrt().floor() as usize).max(1))
        .min(width)
        .max(1);
    let seeds: Vec<u64> = (0..hyper.n_trees)
        .map(|i| derive_seed(hyper.seed, &format!("rf-tree-{i}")))
        .collect();
    let trees: Vec<DecisionTree<LeafCounts>> = seeds
        .par_iter()
        .map(|&tree_seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let rows: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n) as u32).collect();
            let mut builder = ForestTreeBuilder {
                x,
                y,
                hyper,
                k_features,
                width,
                rng,
                nodes: Vec::new(),
            };
            builder.grow(&rows, 0);
            DecisionTree {
                nodes: builder.nodes,
            }
        })
        .collect();
    Ok(RfModel {
        trees,
        bootstrap_seeds: seeds,
        n_features: width,
        hyper: hyper.clone(),
    })
}

/// Mean of per-tree leaf class frequencies: `[p_safe, p_ddos]`.
pub fn predict_rf(model: &RfModel, x: &[f64]) -> Result<[f64; 2], TreeError> {
    if x.len() != model.n_features {
        return Err(TreeError::WidthMismatch {
            expected: model.n_features,
            got: x.len(),
        });
    }
    let mut acc = [0.0, 0.0];
    for tree in &model.trees {
        let freq = tree.leaf_for(x)?.frequencies();
        acc[0] += freq[0];
        acc[1] += freq[1];
    }
    let k = model.trees.len() as f64;
    Ok([acc[0] / k, acc[1] / k])
}

struct ForestTreeBuilder<'a> {
    x: &'a Tensor,
    y: &'a [f64],
    hyper: &'a RfHyper,
    k_features: usize,
    width: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node<LeafCounts>>,
}

fn gini(n0: f64, n1: f64) -> f64 {
    let total = n0 + n1;
    if total == 0.0 {
        return 0.0;
    }
    let p0 = n0 / total;
    let p1 = n1 / total;
    1.0 - p0 * p0 - p1 * p1
}

impl ForestTreeBuilder<'_> {
    fn counts(&self, rows: &[u32]) -> LeafCounts {
        let mut c = LeafCounts { safe: 0, ddos: 0 };
        for &i in rows {
            if self.y[i as usize] > 0.5 {
                c.ddos += 1;
            } else {
                c.safe += 1;
            }
        }
        c
    }

    fn grow(&mut self, rows: &[u32], depth: usize) -> usize {
        let counts = self.counts(rows);
        let pure = counts.safe == 0 || counts.ddos == 0;
        let depth_capped = self.hyper.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || rows.len() < 2 * self.hyper.min_leaf.max(1) {
            return self.push_leaf(counts);
        }
        // Feature subset for this node, scanned in ascending index order so
        // equal-gain ties resolve to the lowest feature, then threshold.
        let mut features: Vec<usize> = sample(&mut self.rng, self.width, self.k_features).into_vec();
        features.sort_unstable();
        let parent = gini(counts.safe as f64, counts.ddos as f64);
        let n_total = rows.len() as f64;
        let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
        let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(rows.len());
        for &feature in &features {
            sorted.clear();
            sorted.extend(rows.iter().map(|&i| {
                let i = i as usize;
                (self.x.row(i)[feature], self.y[i] > 0.5)
            }));
            sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let (mut l0, mut l1) = (0.0, 0.0);
            for k in 0..sorted.len() - 1 {
                if sorted[k].1 {
                    l1 += 1.0;
                } else {
                    l0 += 1.0;
                }
                if sorted[k].0 == sorted[k + 1].0 {
                    continue;
                }
                let n_left = l0 + l1;
                let n_right = n_total - n_left;
                if (n_left as usize) < self.hyper.min_leaf || (n_right as usize) < self.hyper.min_leaf
                {
                    continue;
                }
                let r0 = counts.safe as f64 - l0;
                let r1 = counts.ddos as f64 - l1;
                let weighted =
                    (n_left / n_total) * gini(l0, l1) + (n_right / n_total) * gini(r0, r1);
                let gain = parent - weighted;
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.0) {
                    best = Some((gain, feature, 0.5 * (sorted[k].0 + sorted[k + 1].0)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.push_leaf(counts);
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&i| self.x.row(i as usize)[feature] < threshold);
        let idx = self.nodes.len();
        self.nodes.push(Node::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(&left_rows, depth + 1);
        let right = self.grow(&right_rows, depth + 1);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[idx]
        {
            *l = left;
            *r = right;
        }
        idx
    }

    fn push_leaf(&mut self, counts: LeafCounts) -> usize {
        self.nodes.push(Node::Leaf { value: counts });
        self.nodes.len() - 1
    }
}
