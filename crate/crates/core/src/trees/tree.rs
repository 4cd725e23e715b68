//! Flat-array decision tree storage shared by the boosted and bagged
//! ensembles. Boosted trees carry a real leaf value; forest trees carry
//! per-class training counts.

use serde::{Deserialize, Serialize};

use super::TreeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node<L> {
    /// `x[feature] < threshold` goes left, otherwise right.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: L,
    },
}

/// Tree as an explicit node array; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<L> {
    pub nodes: Vec<Node<L>>,
}

impl<L> DecisionTree<L> {
    pub fn leaf(value: L) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn leaf_for(&self, x: &[f64]) -> Result<&L, TreeError> {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return Ok(value),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let Some(&v) = x.get(*feature) else {
                        return Err(TreeError::WidthMismatch {
                            expected: *feature + 1,
                            got: x.len(),
                        });
                    };
                    idx = if v < *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.depth_from(0)
    }

    fn depth_from(&self, idx: usize) -> usize {
        match &self.nodes[idx] {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => {
                1 + self.depth_from(*left).max(self.depth_from(*right))
            }
        }
    }
}

/// Class-0 / class-1 training counts in a forest leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafCounts {
    pub safe: u64,
    pub ddos: u64,
}

impl LeafCounts {
    pub fn frequencies(&self) -> [f64; 2] {
        let total = (self.safe + self.ddos) as f64;
        if total == 0.0 {
            return [0.5, 0.5];
        }
        [self.safe as f64 / total, self.ddos as f64 / total]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traversal_follows_thresholds() {
        let tree = DecisionTree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: -1.0 },
                Node::Leaf { value: 1.0 },
            ],
        };
        assert_eq!(*tree.leaf_for(&[0.2]).unwrap(), -1.0);
        assert_eq!(*tree.leaf_for(&[0.5]).unwrap(), 1.0);
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn short_vector_is_width_error() {
        let tree: DecisionTree<f64> = DecisionTree {
            nodes: vec![
                Node::Split {
                    feature: 3,
                    threshold: 0.0,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: 0.0 },
                Node::Leaf { value: 1.0 },
            ],
        };
        assert!(matches!(
            tree.leaf_for(&[1.0, 2.0]),
            Err(TreeError::WidthMismatch { .. })
        ));
    }
}
