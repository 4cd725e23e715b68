//! Pointwise nonlinearities and the numerically safe softmax.

use serde::{Deserialize, Serialize};

use super::{Mode, NnError, Param};
use crate::tensor::Tensor;

/// max(0, x) elementwise.
pub fn relu_tensor(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Overflow-safe logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Shift-invariant softmax: the maximum is subtracted before exponentiation,
/// so arbitrarily large (finite) inputs cannot overflow.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// ReLU as a stack layer.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Relu {
    #[serde(skip)]
    cache: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let out = relu_tensor(input);
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let input = self
            .cache
            .as_ref()
            .ok_or(NnError::BackwardBeforeForward { layer: "relu" })?;
        let mut g = grad_out.clone();
        for (gi, &xi) in g.data_mut().iter_mut().zip(input.data()) {
            if xi <= 0.0 {
                *gi = 0.0;
            }
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negative_passes_positive_and_zero() {
        let x = Tensor::from_slice(&[-3.0, 5.0, 0.0]);
        assert_eq!(relu_tensor(&x).data(), &[0.0, 5.0, 0.0]);
    }

    #[test]
    fn relu_is_idempotent() {
        let x = Tensor::from_slice(&[-1.5, 2.5, 0.0, -0.1]);
        let once = relu_tensor(&x);
        assert_eq!(relu_tensor(&once), once);
    }

    #[test]
    fn softmax_symmetry() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let thirds = softmax(&[7.3, 7.3, 7.3]);
        for p in thirds {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_handles_huge_inputs_without_overflow() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn sigmoid_is_safe_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(1000.0) <= 1.0 && sigmoid(1000.0) > 0.999);
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(-1000.0) < 1e-3);
    }
}
