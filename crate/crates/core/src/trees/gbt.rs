//! Gradient-boosted decision trees on logistic loss.
//!
//! Stagewise second-order boosting: each round fits a regression tree to the
//! per-row gradient/hessian statistics of the current margin, with leaf
//! value `-G / (H + lambda)` and split gain
//! `0.5 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda))`. Split
//! search is exact greedy over sorted unique values; ties break toward the
//! lowest feature index, then the lowest threshold. Training is
//! deterministic given the inputs and hyperparameters.

use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, Node};
use super::{check_training_inputs, TreeError};
use crate::nn::sigmoid;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbtHyper {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
}

impl Default for GbtHyper {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbtModel {
    pub trees: Vec<DecisionTree<f64>>,
    pub learning_rate: f64,
    /// Log-odds of the training prior; predictions start from here.
    pub base_score: f64,
    pub n_features: usize,
    pub hyper: GbtHyper,
}

const PRIOR_CLAMP: f64 = 1e-6;

pub fn train_gbt(x: &Tensor, y: &[f64], hyper: &GbtHyper) -> Result<GbtModel, TreeError> {
    let (n, width) = check_training_inputs(x, y)?;
    let positive = y.iter().sum::<f64>() / n as f64;
    let prior = positive.clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
    let base_score = (prior / (1.0 - prior)).ln();
    let mut model = GbtModel {
        trees: Vec::new(),
        learning_rate: hyper.learning_rate,
        base_score,
        n_features: width,
        hyper: hyper.clone(),
    };
    // Single-class labels: the prior log-odds already fits perfectly.
    if y.iter().all(|&v| v == y[0]) {
        return Ok(model);
    }

    let mut scores = vec![base_score; n];
    let all_rows: Vec<u32> = (0..n as u32).collect();
    for _ in 0..hyper.n_trees {
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for i in 0..n {
            let p = sigmoid(scores[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        let mut builder = TreeBuilder {
            x,
            grad: &grad,
            hess: &hess,
            hyper,
            nodes: Vec::new(),
        };
        builder.grow(&all_rows, 0);
        let tree = DecisionTree { nodes: builder.nodes };
        for i in 0..n {
            scores[i] += hyper.learning_rate * tree.leaf_for(x.row(i))?;
        }
        model.trees.push(tree);
    }
    Ok(model)
}

/// Raw margin before the logistic link.
pub fn gbt_margin(model: &GbtModel, x: &[f64]) -> Result<f64, TreeError> {
    if x.len() != model.n_features {
        return Err(TreeError::WidthMismatch {
            expected: model.n_features,
            got: x.len(),
        });
    }
    let mut score = model.base_score;
    for tree in &model.trees {
        score += model.learning_rate * tree.leaf_for(x)?;
    }
    Ok(score)
}

/// `[p_safe, p_ddos]` with `p_ddos = sigmoid(margin)`.
pub fn predict_gbt(model: &GbtModel, x: &[f64]) -> Result<[f64; 2], TreeError> {
    let p = sigmoid(gbt_margin(model, x)?);
    Ok([1.0 - p, p])
}

/// Mean logistic loss of the model margins against labels.
pub fn gbt_train_loss(model: &GbtModel, x: &Tensor, y: &[f64]) -> Result<f64, TreeError> {
    let n = x.shape()[0];
    let mut total = 0.0;
    for i in 0..n {
        let margin = gbt_margin(model, x.row(i))?;
        // log(1 + exp(-margin*sign)) computed stably.
        let z = if y[i] > 0.5 { margin } else { -margin };
        total += if z > 0.0 {
            (-z).exp().ln_1p()
        } else {
            -z + z.exp().ln_1p()
        };
    }
    Ok(total / n as f64)
}

struct TreeBuilder<'a> {
    x: &'a Tensor,
    grad: &'a [f64],
    hess: &'a [f64],
    hyper: &'a GbtHyper,
    nodes: Vec<Node<f64>>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    /// Appends the subtree for `rows` and returns its node index.
    fn grow(&mut self, rows: &[u32], depth: usize) -> usize {
        let g_total: f64 = rows.iter().map(|&i| self.grad[i as usize]).sum();
        let h_total: f64 = rows.iter().map(|&i| self.hess[i as usize]).sum();
        let leaf_value = -g_total / (h_total + self.hyper.lambda);

        if depth >= self.hyper.max_depth || rows.len() < 2 {
            return self.push_leaf(leaf_value);
        }
        let Some(best) = self.find_split(rows, g_total, h_total) else {
            return self.push_leaf(leaf_value);
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&i| self.x.row(i as usize)[best.feature] < best.threshold);
        let idx = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: best.feature,
            threshold: best.threshold,
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

    fn push_leaf(&mut self, value: f64) -> usize {
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn find_split(&self, rows: &[u32], g_total: f64, h_total: f64) -> Option<BestSplit> {
        let width = self.x.shape()[1];
        let lambda = self.hyper.lambda;
        let parent_obj = g_total * g_total / (h_total + lambda);
        let mut best: Option<BestSplit> = None;
        let mut sorted: Vec<(f64, f64, f64)> = Vec::with_capacity(rows.len());
        for feature in 0..width {
            sorted.clear();
            sorted.extend(rows.iter().map(|&i| {
                let i = i as usize;
                (self.x.row(i)[feature], self.grad[i], self.hess[i])
            }));
            sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut g_left = 0.0;
            let mut h_left = 0.0;
            for k in 0..sorted.len() - 1 {
                g_left += sorted[k].1;
                h_left += sorted[k].2;
                if sorted[k].0 == sorted[k + 1].0 {
                    continue;
                }
                let h_right = h_total - h_left;
                if h_left < self.hyper.min_child_weight || h_right < self.hyper.min_child_weight {
                    continue;
                }
                let g_right = g_total - g_left;
                let gain = 0.5
                    * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda)
                        - parent_obj);
                // Strict improvement required; scanning features and
                // thresholds in ascending order makes the first maximum win.
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        gain,
                        feature,
                        threshold: 0.5 * (sorted[k].0 + sorted[k + 1].0),
                    });
                }
            }
        }
        best
    }
}
