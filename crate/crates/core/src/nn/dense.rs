//! Fully connected layer with an optional fused activation.

use serde::{Deserialize, Serialize};

use super::activation::sigmoid;
use super::{Mode, NnError, Param};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    /// `[out_features, in_features]`, applied as `y = W x + b`.
    pub weight: Param,
    pub bias: Param,
    pub activation: Activation,
    #[serde(skip)]
    cache: Option<DenseCache>,
}

#[derive(Debug, Clone)]
struct DenseCache {
    input: Tensor,
    pre: Tensor,
    post: Tensor,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self, NnError> {
        if weight.rank() != 2 || bias.rank() != 1 || weight.shape()[0] != bias.shape()[0] {
            return Err(NnError::Geometry {
                layer: "dense",
                detail: format!(
                    "weight {:?} and bias {:?} do not describe an m x n map",
                    weight.shape(),
                    bias.shape()
                ),
            });
        }
        Ok(Self {
            weight: Param::new("weight", weight),
            bias: Param::new("bias", bias),
            activation,
            cache: None,
        })
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    /// Input `[N, in]` -> output `[N, out]`.
    pub fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        if input.rank() != 2 || input.shape()[1] != self.in_features() {
            return Err(NnError::Geometry {
                layer: "dense",
                detail: format!(
                    "input {:?} does not match weight {:?}",
                    input.shape(),
                    self.weight.value.shape()
                ),
            });
        }
        let mut pre = input.matmul_nt(&self.weight.value)?;
        let bias = self.bias.value.data();
        let out_f = self.out_features();
        for i in 0..pre.shape()[0] {
            let row = pre.row_mut(i);
            for j in 0..out_f {
                row[j] += bias[j];
            }
        }
        let post = match self.activation {
            Activation::None => pre.clone(),
            Activation::Relu => pre.map(|v| v.max(0.0)),
            Activation::Sigmoid => pre.map(sigmoid),
        };
        self.cache = Some(DenseCache {
            input: input.clone(),
            pre,
            post: post.clone(),
        });
        Ok(post)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(NnError::BackwardBeforeForward { layer: "dense" })?;
        let mut d_pre = grad_out.clone();
        match self.activation {
            Activation::None => {}
            Activation::Relu => {
                for (g, &z) in d_pre.data_mut().iter_mut().zip(cache.pre.data()) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, &s) in d_pre.data_mut().iter_mut().zip(cache.post.data()) {
                    *g *= s * (1.0 - s);
                }
            }
        }
        self.weight.grad.add_assign(&d_pre.matmul_tn(&cache.input)?)?;
        let out_f = self.out_features();
        for i in 0..d_pre.shape()[0] {
            let row = d_pre.row(i);
            let bg = self.bias.grad.data_mut();
            for j in 0..out_f {
                bg[j] += row[j];
            }
        }
        Ok(d_pre.matmul(&self.weight.value)?)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_dense(n: usize, activation: Activation) -> Dense {
        let mut w = Tensor::zeros(&[n, n]);
        for i in 0..n {
            w.set2(i, i, 1.0);
        }
        Dense::new(w, Tensor::zeros(&[n]), activation).unwrap()
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let mut d = identity_dense(3, Activation::None);
        let x = Tensor::new(vec![1, 3], vec![0.5, -2.0, 7.0]).unwrap();
        let y = d.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_input_sigmoid_gives_half() {
        let mut d = identity_dense(4, Activation::Sigmoid);
        let x = Tensor::zeros(&[2, 4]);
        let y = d.forward(&x, Mode::Infer).unwrap();
        assert!(y.data().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn random_weights_match_naive_loop() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(9, "dense-oracle");
        let (m, n, batch) = (4, 6, 3);
        let w = Tensor::new(
            vec![m, n],
            (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let b = Tensor::from_slice(&(0..m).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
        let x = Tensor::new(
            vec![batch, n],
            (0..batch * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut d = Dense::new(w.clone(), b.clone(), Activation::None).unwrap();
        let y = d.forward(&x, Mode::Infer).unwrap();
        for s in 0..batch {
            for i in 0..m {
                let mut expect = b.data()[i];
                for j in 0..n {
                    expect += w.at2(i, j) * x.at2(s, j);
                }
                assert!((y.at2(s, i) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn width_mismatch_is_geometry_error() {
        let mut d = identity_dense(3, Activation::None);
        let x = Tensor::zeros(&[1, 4]);
        assert!(matches!(
            d.forward(&x, Mode::Infer),
            Err(NnError::Geometry { .. })
        ));
    }
}
