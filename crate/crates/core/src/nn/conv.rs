//! 1-D convolution over channel-major sequences.
//!
//! Inputs are flat flow-feature vectors, so convolution runs along a single
//! spatial axis with channels: each output element is the kernel/input
//! triple sum (over input channel, kernel offset) plus a per-filter bias.

use serde::{Deserialize, Serialize};

use super::{batch_of, Mode, NnError, Param};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding; output length shrinks by `kernel - 1` per unit stride.
    Valid,
    /// Zero padding of `(kernel - 1) / 2` on each side (odd kernels only),
    /// preserving length at stride 1.
    Same,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1d {
    /// `[out_channels, in_channels, kernel]`.
    pub kernel: Param,
    /// `[out_channels]`.
    pub bias: Param,
    pub stride: usize,
    pub padding: usize,
    #[serde(skip)]
    cache: Option<Tensor>,
}

impl Conv1d {
    pub fn new(kernel: Tensor, bias: Tensor, stride: usize, padding: Padding) -> Result<Self, NnError> {
        if kernel.rank() != 3 || bias.rank() != 1 || kernel.shape()[0] != bias.shape()[0] {
            return Err(NnError::Geometry {
                layer: "conv1d",
                detail: format!(
                    "kernel {:?} and bias {:?} do not describe a filter bank",
                    kernel.shape(),
                    bias.shape()
                ),
            });
        }
        if stride < 1 {
            return Err(NnError::Geometry {
                layer: "conv1d",
                detail: "stride must be >= 1".into(),
            });
        }
        let k = kernel.shape()[2];
        let pad = match padding {
            Padding::Valid => 0,
            Padding::Same => {
                if k % 2 == 0 {
                    return Err(NnError::Geometry {
                        layer: "conv1d",
                        detail: format!("same padding requires an odd kernel, got {k}"),
                    });
                }
                (k - 1) / 2
            }
        };
        Ok(Self {
            kernel: Param::new("kernel", kernel),
            bias: Param::new("bias", bias),
            stride,
            padding: pad,
            cache: None,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.value.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.value.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.value.shape()[2]
    }

    pub fn out_len(&self, in_len: usize) -> Result<usize, NnError> {
        let k = self.kernel_size();
        let padded = in_len + 2 * self.padding;
        if k > padded {
            return Err(NnError::Geometry {
                layer: "conv1d",
                detail: format!("kernel {k} exceeds padded input length {padded}"),
            });
        }
        Ok((padded - k) / self.stride + 1)
    }

    /// Normalizes `[N, L]` single-channel input to `[N, 1, L]` and checks
    /// channel agreement.
    fn input_dims(&self, input: &Tensor) -> Result<(usize, usize, usize), NnError> {
        let n = batch_of(input.shape(), "conv1d")?;
        let (c_in, len) = match input.shape() {
            [_, l] if self.in_channels() == 1 => (1, *l),
            [_, c, l] => (*c, *l),
            other => {
                return Err(NnError::Geometry {
                    layer: "conv1d",
                    detail: format!("expected [N, C, L] input, got {other:?}"),
                })
            }
        };
        if c_in != self.in_channels() {
            return Err(NnError::Geometry {
                layer: "conv1d",
                detail: format!(
                    "input has {c_in} channels, kernel expects {}",
                    self.in_channels()
                ),
            });
        }
        Ok((n, c_in, len))
    }

    pub fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let (n, c_in, len) = self.input_dims(input)?;
        let l_out = self.out_len(len)?;
        let (c_out, k) = (self.out_channels(), self.kernel_size());
        let (s, p) = (self.stride, self.padding as isize);
        let mut out = Tensor::zeros(&[n, c_out, l_out]);

        let x = input.data();
        let w = self.kernel.value.data();
        let b = self.bias.value.data();
        for sample in 0..n {
            for o in 0..c_out {
                let out_base = (sample * c_out + o) * l_out;
                out.data_mut()[out_base..out_base + l_out].fill(b[o]);
                for c in 0..c_in {
                    let in_base = (sample * c_in + c) * len;
                    for t in 0..k {
                        let w_oct = w[(o * c_in + c) * k + t];
                        if w_oct == 0.0 {
                            continue;
                        }
                        let off = t as isize - p;
                        // valid j range: 0 <= j*s + off < len
                        let j_lo = if off >= 0 {
                            0
                        } else {
                            ((-off) as usize + s - 1) / s
                        };
                        let j_hi = if (len as isize) > off {
                            (((len as isize - 1 - off) as usize) / s + 1).min(l_out)
                        } else {
                            0
                        };
                        let od = out.data_mut();
                        for j in j_lo..j_hi {
                            let xi = (j * s) as isize + off;
                            od[out_base + j] += w_oct * x[in_base + xi as usize];
                        }
                    }
                }
            }
        }
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let input = self
            .cache
            .as_ref()
            .ok_or(NnError::BackwardBeforeForward { layer: "conv1d" })?
            .clone();
        let (n, c_in, len) = self.input_dims(&input)?;
        let l_out = self.out_len(len)?;
        let (c_out, k) = (self.out_channels(), self.kernel_size());
        let (s, p) = (self.stride, self.padding as isize);

        let mut d_input = Tensor::zeros(input.shape());
        let x = input.data();
        let w = self.kernel.value.data();
        let go = grad_out.data();
        let dw = self.kernel.grad.data_mut();
        let db = self.bias.grad.data_mut();
        for sample in 0..n {
            for o in 0..c_out {
                let out_base = (sample * c_out + o) * l_out;
                for j in 0..l_out {
                    db[o] += go[out_base + j];
                }
                for c in 0..c_in {
                    let in_base = (sample * c_in + c) * len;
                    for t in 0..k {
                        let off = t as isize - p;
                        let j_lo = if off >= 0 {
                            0
                        } else {
                            ((-off) as usize + s - 1) / s
                        };
                        let j_hi = if (len as isize) > off {
                            (((len as isize - 1 - off) as usize) / s + 1).min(l_out)
                        } else {
                            0
                        };
                        let w_oct = w[(o * c_in + c) * k + t];
                        let mut wg = 0.0;
                        let di = d_input.data_mut();
                        for j in j_lo..j_hi {
                            let xi = ((j * s) as isize + off) as usize;
                            let g = go[out_base + j];
                            wg += g * x[in_base + xi];
                            di[in_base + xi] += g * w_oct;
                        }
                        dw[(o * c_in + c) * k + t] += wg;
                    }
                }
            }
        }
        Ok(d_input)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.kernel, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.kernel, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_1ch(kernel: &[f64], bias: f64, padding: Padding) -> Conv1d {
        let k = Tensor::new(vec![1, 1, kernel.len()], kernel.to_vec()).unwrap();
        Conv1d::new(k, Tensor::from_slice(&[bias]), 1, padding).unwrap()
    }

    #[test]
    fn identity_kernel_extracts_center() {
        let mut conv = conv_1ch(&[0.0, 1.0, 0.0], 0.0, Padding::Valid);
        let x = Tensor::new(vec![1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conv.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2]);
        assert_eq!(y.data(), &[2.0, 3.0]);
    }

    #[test]
    fn sum_kernel_with_bias() {
        let mut conv = conv_1ch(&[1.0, 1.0, 1.0], 1.0, Padding::Valid);
        let x = Tensor::new(vec![1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conv.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.data(), &[7.0, 10.0]);
    }

    #[test]
    fn one_hot_kernel_shifts_input() {
        // Kernel hot at offset 0 with same padding reproduces the input
        // shifted right by the pad amount.
        let mut conv = conv_1ch(&[1.0, 0.0, 0.0], 0.0, Padding::Same);
        let x = Tensor::new(vec![1, 1, 5], vec![5.0, 1.0, -2.0, 3.0, 9.0]).unwrap();
        let y = conv.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.data(), &[0.0, 5.0, 1.0, -2.0, 3.0]);
    }

    #[test]
    fn random_conv_matches_triple_loop_oracle() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(3, "conv-oracle");
        let (c_in, c_out, k, len, n) = (2, 3, 3, 7, 2);
        let kernel = Tensor::new(
            vec![c_out, c_in, k],
            (0..c_out * c_in * k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let bias =
            Tensor::from_slice(&(0..c_out).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
        let x = Tensor::new(
            vec![n, c_in, len],
            (0..n * c_in * len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut conv = Conv1d::new(kernel.clone(), bias.clone(), 1, Padding::Valid).unwrap();
        let y = conv.forward(&x, Mode::Infer).unwrap();
        let l_out = len - k + 1;
        assert_eq!(y.shape(), &[n, c_out, l_out]);
        for s in 0..n {
            for o in 0..c_out {
                for j in 0..l_out {
                    let mut expect = bias.data()[o];
                    for c in 0..c_in {
                        for t in 0..k {
                            expect += x.data()[(s * c_in + c) * len + j + t]
                                * kernel.data()[(o * c_in + c) * k + t];
                        }
                    }
                    let got = y.data()[(s * c_out + o) * l_out + j];
                    assert!((got - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn channel_mismatch_is_geometry_error() {
        let k = Tensor::zeros(&[3, 2, 3]);
        let mut conv = Conv1d::new(k, Tensor::zeros(&[3]), 1, Padding::Valid).unwrap();
        let x = Tensor::zeros(&[1, 4, 7]);
        assert!(matches!(
            conv.forward(&x, Mode::Infer),
            Err(NnError::Geometry { .. })
        ));
    }

    #[test]
    fn kernel_longer_than_padded_input_is_rejected() {
        let mut conv = conv_1ch(&[1.0; 5], 0.0, Padding::Valid);
        let x = Tensor::new(vec![1, 1, 4], vec![0.0; 4]).unwrap();
        assert!(conv.forward(&x, Mode::Infer).is_err());
    }

    #[test]
    fn stride_two_output_length() {
        let k = Tensor::new(vec![1, 1, 3], vec![1.0, 0.0, 0.0]).unwrap();
        let mut conv = Conv1d::new(k, Tensor::zeros(&[1]), 2, Padding::Valid).unwrap();
        let x = Tensor::new(vec![1, 1, 7], (1..=7).map(f64::from).collect()).unwrap();
        let y = conv.forward(&x, Mode::Infer).unwrap();
        // floor((7 - 3) / 2) + 1 = 3
        assert_eq!(y.shape(), &[1, 1, 3]);
        assert_eq!(y.data(), &[1.0, 3.0, 5.0]);
    }
}
