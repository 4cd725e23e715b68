//! Batch normalization over per-sample features.
//!
//! Train mode normalizes each feature with the batch mean and (biased)
//! variance and updates running statistics by exponential moving average;
//! infer mode applies the running statistics. Conv activations `[N, C, L]`
//! are normalized per (channel, position) scalar, i.e. the per-sample dims
//! are flattened into the feature axis.

use serde::{Deserialize, Serialize};

use super::{batch_of, Mode, NnError, Param};
use crate::tensor::Tensor;

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
    #[serde(skip)]
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    mode: Mode,
    in_shape: Vec<usize>,
}

impl BatchNorm {
    pub fn new(features: usize, momentum: f64, eps: f64) -> Result<Self, NnError> {
        if eps < 0.0 {
            return Err(NnError::Geometry {
                layer: "batchnorm",
                detail: format!("epsilon must be non-negative, got {eps}"),
            });
        }
        Ok(Self {
            gamma: Param::new("gamma", Tensor::filled(&[features], 1.0)),
            beta: Param::new("beta", Tensor::zeros(&[features])),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], 1.0),
            momentum,
            eps,
            cache: None,
        })
    }

    pub fn features(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let n = batch_of(input.shape(), "batchnorm")?;
        if n == 0 {
            return Err(NnError::EmptyBatch);
        }
        let d: usize = input.shape()[1..].iter().product();
        if d != self.features() {
            return Err(NnError::Geometry {
                layer: "batchnorm",
                detail: format!("input has {d} features, layer expects {}", self.features()),
            });
        }
        let x = input.data();
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; d];
                let mut var = vec![0.0; d];
                for s in 0..n {
                    let row = &x[s * d..(s + 1) * d];
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                for m in &mut mean {
                    *m /= n as f64;
                }
                for s in 0..n {
                    let row = &x[s * d..(s + 1) * d];
                    for ((va, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                        let c = v - m;
                        *va += c * c;
                    }
                }
                for v in &mut var {
                    *v /= n as f64;
                }
                let rm = self.running_mean.data_mut();
                let rv = self.running_var.data_mut();
                for j in 0..d {
                    rm[j] = self.momentum * rm[j] + (1.0 - self.momentum) * mean[j];
                    rv[j] = self.momentum * rv[j] + (1.0 - self.momentum) * var[j];
                }
                (mean, var)
            }
            Mode::Infer => (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut x_hat = Tensor::zeros(&[n, d]);
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut out = Tensor::zeros(input.shape());
        {
            let xh = x_hat.data_mut();
            let od = out.data_mut();
            for s in 0..n {
                for j in 0..d {
                    let idx = s * d + j;
                    let h = (x[idx] - mean[j]) * inv_std[j];
                    xh[idx] = h;
                    od[idx] = gamma[j] * h + beta[j];
                }
            }
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            mode,
            in_shape: input.shape().to_vec(),
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(NnError::BackwardBeforeForward { layer: "batchnorm" })?;
        let d = self.features();
        let n = cache.in_shape[0];
        let go = grad_out.data();
        let xh = cache.x_hat.data();
        let gamma = self.gamma.value.data().to_vec();

        // Parameter gradients are mode-independent.
        {
            let gg = self.gamma.grad.data_mut();
            let bg = self.beta.grad.data_mut();
            for s in 0..n {
                for j in 0..d {
                    let idx = s * d + j;
                    gg[j] += go[idx] * xh[idx];
                    bg[j] += go[idx];
                }
            }
        }

        let mut d_input = Tensor::zeros(&cache.in_shape);
        match cache.mode {
            Mode::Infer => {
                let di = d_input.data_mut();
                for s in 0..n {
                    for j in 0..d {
                        let idx = s * d + j;
                        di[idx] = go[idx] * gamma[j] * cache.inv_std[j];
                    }
                }
            }
            Mode::Train => {
                // dx = (gamma * inv_std / N) * (N*dxh - sum(dxh) - xh * sum(dxh*xh))
                let mut sum_dxh = vec![0.0; d];
                let mut sum_dxh_xh = vec![0.0; d];
                for s in 0..n {
                    for j in 0..d {
                        let idx = s * d + j;
                        let dxh = go[idx] * gamma[j];
                        sum_dxh[j] += dxh;
                        sum_dxh_xh[j] += dxh * xh[idx];
                    }
                }
                let di = d_input.data_mut();
                let nf = n as f64;
                for s in 0..n {
                    for j in 0..d {
                        let idx = s * d + j;
                        let dxh = go[idx] * gamma[j];
                        di[idx] = (cache.inv_std[j] / nf)
                            * (nf * dxh - sum_dxh[j] - xh[idx] * sum_dxh_xh[j]);
                    }
                }
            }
        }
        Ok(d_input)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
