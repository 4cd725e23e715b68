//! Global average pooling and shape flattening.

use serde::{Deserialize, Serialize};

use super::{Mode, NnError, Param};
use crate::tensor::Tensor;

/// Per-channel arithmetic mean over the sequence axis: `[N, C, L] -> [N, C]`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GlobalAvgPool {
    #[serde(skip)]
    in_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let &[n, c, l] = match input.shape() {
            [n, c, l] => &[*n, *c, *l],
            other => {
                return Err(NnError::Geometry {
                    layer: "avgpool",
                    detail: format!("expected [N, C, L], got {other:?}"),
                })
            }
        };
        if l == 0 {
            return Err(NnError::Geometry {
                layer: "avgpool",
                detail: "cannot pool an empty sequence".into(),
            });
        }
        let mut out = Tensor::zeros(&[n, c]);
        let x = input.data();
        let od = out.data_mut();
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * l;
                od[s * c + ch] = x[base..base + l].iter().sum::<f64>() / l as f64;
            }
        }
        self.in_shape = Some(input.shape().to_vec());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let shape = self
            .in_shape
            .as_ref()
            .ok_or(NnError::BackwardBeforeForward { layer: "avgpool" })?;
        let (n, c, l) = (shape[0], shape[1], shape[2]);
        let mut d_input = Tensor::zeros(shape);
        let go = grad_out.data();
        let di = d_input.data_mut();
        for s in 0..n {
            for ch in 0..c {
                let g = go[s * c + ch] / l as f64;
                let base = (s * c + ch) * l;
                for v in &mut di[base..base + l] {
                    *v = g;
                }
            }
        }
        Ok(d_input)
    }

    pub fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

/// `[N, ...] -> [N, D]`, row-major.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Flatten {
    #[serde(skip)]
    in_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let n = super::batch_of(input.shape(), "flatten")?;
        let d: usize = input.shape()[1..].iter().product();
        self.in_shape = Some(input.shape().to_vec());
        Ok(input.clone().reshape(vec![n, d])?)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let shape = self
            .in_shape
            .as_ref()
            .ok_or(NnError::BackwardBeforeForward { layer: "flatten" })?;
        Ok(grad_out.clone().reshape(shape.clone())?)
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
    fn pools_per_channel_means() {
        let mut pool = GlobalAvgPool::new();
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 3.0, 2.0, 6.0]).unwrap();
        let y = pool.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.data(), &[2.0, 4.0]);
    }

    #[test]
    fn constant_channel_pools_to_constant() {
        let mut pool = GlobalAvgPool::new();
        let x = Tensor::filled(&[2, 3, 5], 4.25);
        let y = pool.forward(&x, Mode::Infer).unwrap();
        assert!(y.data().iter().all(|&v| v == 4.25));
    }

    #[test]
    fn random_input_matches_mean_oracle() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(5, "pool-oracle");
        let (n, c, l) = (2, 3, 9);
        let x = Tensor::new(
            vec![n, c, l],
            (0..n * c * l).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let mut pool = GlobalAvgPool::new();
        let y = pool.forward(&x, Mode::Infer).unwrap();
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * l;
                let mean = x.data()[base..base + l].iter().sum::<f64>() / l as f64;
                assert!((y.at2(s, ch) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut pool = GlobalAvgPool::new();
        let x = Tensor::zeros(&[1, 2, 0]);
        assert!(pool.forward(&x, Mode::Infer).is_err());
    }
}
