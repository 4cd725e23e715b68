//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::{NnError, Param};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: one (first, second) moment pair per parameter, in the
/// order the parameter list is first presented. The same list must be passed
/// to every `step`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub hyper: AdamParams,
    step_count: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl Adam {
    pub fn new(hyper: AdamParams) -> Self {
        Self {
            hyper,
            step_count: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update from each parameter's accumulated gradient.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<(), NnError> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| {
                    (
                        Tensor::zeros(p.value.shape()),
                        Tensor::zeros(p.value.shape()),
                    )
                })
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(NnError::Geometry {
                layer: "adam",
                detail: format!(
                    "optimizer tracks {} parameters, step got {}",
                    self.moments.len(),
                    params.len()
                ),
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = self.hyper.beta1;
        let b2 = self.hyper.beta2;
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        for (param, (m, v)) in params.iter_mut().zip(&mut self.moments) {
            if m.shape() != param.value.shape() {
                return Err(NnError::Geometry {
                    layer: "adam",
                    detail: format!(
                        "moment shape {:?} vs parameter {:?} ({})",
                        m.shape(),
                        param.value.shape(),
                        param.name
                    ),
                });
            }
            let md = m.data_mut();
            let vd = v.data_mut();
            let theta = param.value.data_mut();
            let grad = param.grad.data();
            for k in 0..theta.len() {
                let g = grad[k];
                md[k] = b1 * md[k] + (1.0 - b1) * g;
                vd[k] = b2 * vd[k] + (1.0 - b2) * g * g;
                let m_hat = md[k] / bias1;
                let v_hat = vd[k] / bias2;
                theta[k] -= self.hyper.learning_rate * m_hat / (v_hat.sqrt() + self.hyper.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(value: f64, grad: f64) -> Param {
        let mut p = Param::new("theta", Tensor::from_slice(&[value]));
        p.grad.data_mut()[0] = grad;
        p
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = scalar_param(1.5, 0.0);
        let mut adam = Adam::new(AdamParams::default());
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.data()[0], 1.5);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_learning_rate() {
        let mut p = scalar_param(0.0, 1.0);
        let mut adam = Adam::new(AdamParams::default());
        adam.step(&mut [&mut p]).unwrap();
        // m_hat = v_hat = 1, so delta = -lr / (1 + eps).
        let expect = -0.001 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn repeated_unit_gradients_shrink_the_update() {
        let mut p = scalar_param(0.0, 1.0);
        let mut adam = Adam::new(AdamParams::default());
        adam.step(&mut [&mut p]).unwrap();
        let first = p.value.data()[0];
        p.grad.data_mut()[0] = 1.0;
        adam.step(&mut [&mut p]).unwrap();
        let second = p.value.data()[0] - first;
        assert!(first < 0.0 && second < 0.0);
        assert!(second.abs() <= first.abs() + 1e-6);
    }

    #[test]
    fn step_count_increments_by_one() {
        let mut p = scalar_param(0.0, 0.5);
        let mut adam = Adam::new(AdamParams::default());
        for want in 1..=5 {
            adam.step(&mut [&mut p]).unwrap();
            assert_eq!(adam.step_count(), want);
        }
    }
}
