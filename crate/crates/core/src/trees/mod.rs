//! Native tree ensembles that consume extracted feature vectors and emit
//! 2-class probabilities: gradient-boosted regression trees on logistic loss
//! and a Gini random forest with bootstrap aggregation.

pub mod forest;
pub mod gbt;
pub mod tree;

pub use forest::{predict_rf, train_rf, RfHyper, RfModel};
pub use gbt::{predict_gbt, train_gbt, GbtHyper, GbtModel};
pub use tree::{DecisionTree, LeafCounts, Node};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("feature vector has width {got}, model expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    Empty,
    #[error("labels and rows disagree: {rows} rows vs {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("label {0} is not binary")]
    BadLabel(f64),
}

pub(crate) fn check_training_inputs(
    x: &crate::tensor::Tensor,
    y: &[f64],
) -> Result<(usize, usize), TreeError> {
    let n = x.shape()[0];
    let width = x.shape()[1];
    if n == 0 {
        return Err(TreeError::Empty);
    }
    if y.len() != n {
        return Err(TreeError::LabelCount {
            rows: n,
            labels: y.len(),
        });
    }
    for &v in y {
        if v != 0.0 && v != 1.0 {
            return Err(TreeError::BadLabel(v));
        }
    }
    Ok((n, width))
}
