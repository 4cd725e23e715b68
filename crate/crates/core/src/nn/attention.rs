//! Scaled dot-product self-attention over a feature sequence.
//!
//! Per sample, the channel-major input `[C, L]` is read as a sequence
//! `X: T x F` (T = L positions, F = C channels). With `Q = X W_q`,
//! `K = X W_k`, `V = X W_v`, the output is `softmax(Q K^T / sqrt(d_k)) V`,
//! row-wise softmax, returned channel-major as `[d_v, L]`.

use serde::{Deserialize, Serialize};

use super::activation::softmax_in_place;
use super::{batch_of, Mode, NnError, Param};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfAttention {
    /// `[F, d_k]` each; projections carry no bias.
    pub w_q: Param,
    pub w_k: Param,
    pub w_v: Param,
    pub d_k: usize,
    #[serde(skip)]
    cache: Option<AttnCache>,
}

#[derive(Debug, Clone)]
struct AttnCache {
    /// Per-sample (x: TxF, q, k, v: Txd_k, attn: TxT).
    samples: Vec<SampleCache>,
    in_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
struct SampleCache {
    x: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    attn: Tensor,
}

impl SelfAttention {
    pub fn new(w_q: Tensor, w_k: Tensor, w_v: Tensor) -> Result<Self, NnError> {
        let shape = w_q.shape().to_vec();
        if w_q.rank() != 2 || w_k.shape() != shape.as_slice() || w_v.shape() != shape.as_slice() {
            return Err(NnError::Geometry {
                layer: "attention",
                detail: format!(
                    "projection shapes must match: {:?} / {:?} / {:?}",
                    w_q.shape(),
                    w_k.shape(),
                    w_v.shape()
                ),
            });
        }
        let d_k = shape[1];
        if d_k == 0 {
            return Err(NnError::Geometry {
                layer: "attention",
                detail: "d_k must be positive".into(),
            });
        }
        Ok(Self {
            w_q: Param::new("w_q", w_q),
            w_k: Param::new("w_k", w_k),
            w_v: Param::new("w_v", w_v),
            d_k,
            cache: None,
        })
    }

    pub fn in_features(&self) -> usize {
        self.w_q.value.shape()[0]
    }

    /// Attention weights for one sequence `X: T x F` (rows sum to 1).
    pub fn attention_weights(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let q = x.matmul(&self.w_q.value)?;
        let k = x.matmul(&self.w_k.value)?;
        let mut scores = q.matmul_nt(&k)?;
        scores.scale(1.0 / (self.d_k as f64).sqrt());
        let t = scores.shape()[0];
        for i in 0..t {
            softmax_in_place(scores.row_mut(i));
        }
        Ok(scores)
    }

    pub fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let n = batch_of(input.shape(), "attention")?;
        let (c, l) = match input.shape() {
            [_, c, l] => (*c, *l),
            other => {
                return Err(NnError::Geometry {
                    layer: "attention",
                    detail: format!("expected [N, C, L], got {other:?}"),
                })
            }
        };
        if c != self.in_features() {
            return Err(NnError::Geometry {
                layer: "attention",
                detail: format!(
                    "input has {c} channels, projections expect {}",
                    self.in_features()
                ),
            });
        }
        let d_v = self.d_k;
        let mut out = Tensor::zeros(&[n, d_v, l]);
        let mut samples = Vec::with_capacity(n);
        for s in 0..n {
            // X = transpose of the [C, L] block.
            let mut x = Tensor::zeros(&[l, c]);
            for ch in 0..c {
                for t in 0..l {
                    let v = input.data()[(s * c + ch) * l + t];
                    x.set2(t, ch, v);
                }
            }
            let q = x.matmul(&self.w_q.value)?;
            let k = x.matmul(&self.w_k.value)?;
            let v = x.matmul(&self.w_v.value)?;
            let mut attn = q.matmul_nt(&k)?;
            attn.scale(1.0 / (self.d_k as f64).sqrt());
            for i in 0..l {
                softmax_in_place(attn.row_mut(i));
            }
            let y = attn.matmul(&v)?; // T x d_v
            for t in 0..l {
                for j in 0..d_v {
                    out.data_mut()[(s * d_v + j) * l + t] = y.at2(t, j);
                }
            }
            samples.push(SampleCache { x, q, k, v, attn });
        }
        self.cache = Some(AttnCache {
            samples,
            in_shape: input.shape().to_vec(),
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(NnError::BackwardBeforeForward { layer: "attention" })?;
        let in_shape = cache.in_shape.clone();
        let (n, c, l) = (in_shape[0], in_shape[1], in_shape[2]);
        let d_v = self.d_k;
        let inv_scale = 1.0 / (self.d_k as f64).sqrt();
        let mut d_input = Tensor::zeros(&in_shape);
        let mut dwq_total = Tensor::zeros(self.w_q.value.shape());
        let mut dwk_total = Tensor::zeros(self.w_k.value.shape());
        let mut dwv_total = Tensor::zeros(self.w_v.value.shape());

        for s in 0..n {
            let sc = &cache.samples[s];
            // d_y: T x d_v from channel-major grad_out.
            let mut d_y = Tensor::zeros(&[l, d_v]);
            for t in 0..l {
                for j in 0..d_v {
                    d_y.set2(t, j, grad_out.data()[(s * d_v + j) * l + t]);
                }
            }
            let d_attn = d_y.matmul_nt(&sc.v)?; // T x T
            let d_v_mat = sc.attn.matmul_tn(&d_y)?; // T x d_v

            // Row-wise softmax backward: ds_ij = a_ij (da_ij - sum_k da_ik a_ik).
            let mut d_scores = Tensor::zeros(&[l, l]);
            for i in 0..l {
                let a_row = sc.attn.row(i);
                let da_row = d_attn.row(i);
                let dot: f64 = a_row.iter().zip(da_row).map(|(a, d)| a * d).sum();
                let out_row = d_scores.row_mut(i);
                for j in 0..l {
                    out_row[j] = a_row[j] * (da_row[j] - dot);
                }
            }
            d_scores.scale(inv_scale);
            let d_q = d_scores.matmul(&sc.k)?;
            let d_k_mat = d_scores.matmul_tn(&sc.q)?;

            dwq_total.add_assign(&sc.x.matmul_tn(&d_q)?)?;
            dwk_total.add_assign(&sc.x.matmul_tn(&d_k_mat)?)?;
            dwv_total.add_assign(&sc.x.matmul_tn(&d_v_mat)?)?;

            let mut d_x = d_q.matmul_nt(&self.w_q.value)?;
            d_x.add_assign(&d_k_mat.matmul_nt(&self.w_k.value)?)?;
            d_x.add_assign(&d_v_mat.matmul_nt(&self.w_v.value)?)?;
            for ch in 0..c {
                for t in 0..l {
                    d_input.data_mut()[(s * c + ch) * l + t] = d_x.at2(t, ch);
                }
            }
        }
        self.w_q.grad.add_assign(&dwq_total)?;
        self.w_k.grad.add_assign(&dwk_total)?;
        self.w_v.grad.add_assign(&dwv_total)?;
        Ok(d_input)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w_q, &self.w_k, &self.w_v]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_q, &mut self.w_k, &mut self.w_v]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.set2(i, i, 1.0);
        }
        t
    }

    #[test]
    fn singleton_sequence_copies_value_row() {
        let f = 3;
        let mut attn = SelfAttention::new(identity(f), identity(f), identity(f)).unwrap();
        // T = 1: the only attention weight is exactly 1, output = V row = x.
        let x = Tensor::new(vec![1, f, 1], vec![0.7, -1.2, 3.0]).unwrap();
        let y = attn.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.shape(), &[1, f, 1]);
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_query_projection_averages_value_rows() {
        let f = 2;
        let zero = Tensor::zeros(&[f, f]);
        let mut attn = SelfAttention::new(zero, identity(f), identity(f)).unwrap();
        // channel-major [C=2, L=3]: rows of X are (1,4), (2,5), (3,6).
        let x = Tensor::new(vec![1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = attn.forward(&x, Mode::Infer).unwrap();
        // uniform attention -> every output row is the column mean of V.
        for t in 0..3 {
            assert!((y.data()[t] - 2.0).abs() < 1e-12);
            assert!((y.data()[3 + t] - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_projections_match_direct_evaluation() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(17, "attn-oracle");
        let (t_len, f) = (3, 4);
        let mut attn = SelfAttention::new(identity(f), identity(f), identity(f)).unwrap();
        let x_flat: Vec<f64> = (0..t_len * f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Build channel-major input from the T x F sample.
        let mut input = Tensor::zeros(&[1, f, t_len]);
        for t in 0..t_len {
            for ch in 0..f {
                input.data_mut()[ch * t_len + t] = x_flat[t * f + ch];
            }
        }
        let y = attn.forward(&input, Mode::Infer).unwrap();

        // Direct evaluation with Q=K=V=X.
        let x = Tensor::new(vec![t_len, f], x_flat).unwrap();
        let mut scores = x.matmul_nt(&x).unwrap();
        scores.scale(1.0 / (f as f64).sqrt());
        for i in 0..t_len {
            softmax_in_place(scores.row_mut(i));
        }
        let expect = scores.matmul(&x).unwrap();
        for t in 0..t_len {
            for j in 0..f {
                let got = y.data()[j * t_len + t];
                assert!((got - expect.at2(t, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rows_are_stochastic() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(23, "attn-rows");
        let (t_len, f) = (5, 3);
        let proj = |rng: &mut rand_chacha::ChaCha8Rng| {
            Tensor::new(
                vec![f, f],
                (0..f * f).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap()
        };
        let attn =
            SelfAttention::new(proj(&mut rng), proj(&mut rng), proj(&mut rng)).unwrap();
        let x = Tensor::new(
            vec![t_len, f],
            (0..t_len * f).map(|_| rng.gen_range(-4.0..4.0)).collect(),
        )
        .unwrap();
        let weights = attn.attention_weights(&x).unwrap();
        for i in 0..t_len {
            let row = weights.row(i);
            assert!(row.iter().all(|&w| w > 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nonconformal_projections_are_rejected() {
        let err = SelfAttention::new(
            Tensor::zeros(&[3, 2]),
            Tensor::zeros(&[3, 3]),
            Tensor::zeros(&[3, 2]),
        );
        assert!(err.is_err());
        let mut attn =
            SelfAttention::new(identity(3), identity(3), identity(3)).unwrap();
        let x = Tensor::zeros(&[1, 4, 2]);
        assert!(matches!(
            attn.forward(&x, Mode::Infer),
            Err(NnError::Geometry { .. })
        ));
    }
}
