//! Peephole LSTM over channel-major sequences.
//!
//! Gate equations, as used throughout:
//!
//! ```text
//! i_t = sigma(W_xi x_t + W_hi h_{t-1} + W_ci c_{t-1} + b_i)
//! f_t = sigma(W_xf x_t + W_hf h_{t-1} + W_cf c_{t-1} + b_f)
//! c_t = f_t . c_{t-1} + i_t . tanh(W_xc x_t + W_hc h_{t-1} + b_c)
//! o_t = sigma(W_xo x_t + W_ho h_{t-1} + W_co c_{t-1} + b_o)
//! h_t = o_t . tanh(c_t)
//! ```
//!
//! All three gates peek at the *previous* cell state. The peephole matrices
//! W_c* can be disabled (`peepholes = false`), which zeroes their
//! contribution and leaves their gradients at zero, giving a conventional
//! LSTM for comparison.

use serde::{Deserialize, Serialize};

use super::activation::sigmoid;
use super::{batch_of, Mode, NnError, Param};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lstm {
    pub w_xi: Param,
    pub w_xf: Param,
    pub w_xc: Param,
    pub w_xo: Param,
    pub w_hi: Param,
    pub w_hf: Param,
    pub w_hc: Param,
    pub w_ho: Param,
    pub w_ci: Param,
    pub w_cf: Param,
    pub w_co: Param,
    pub b_i: Param,
    pub b_f: Param,
    pub b_c: Param,
    pub b_o: Param,
    pub peepholes: bool,
    #[serde(skip)]
    cache: Option<LstmCache>,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
    i: Tensor,
    f: Tensor,
    g: Tensor,
    o: Tensor,
    tanh_c: Tensor,
}

#[derive(Debug, Clone)]
struct LstmCache {
    steps: Vec<StepCache>,
    in_shape: Vec<usize>,
}

impl Lstm {
    /// Zero-initialized cell; call an init routine before training.
    pub fn zeros(in_features: usize, hidden: usize, peepholes: bool) -> Self {
        let x = |name: &str| Param::new(name, Tensor::zeros(&[hidden, in_features]));
        let h = |name: &str| Param::new(name, Tensor::zeros(&[hidden, hidden]));
        let b = |name: &str| Param::new(name, Tensor::zeros(&[hidden]));
        Self {
            w_xi: x("w_xi"),
            w_xf: x("w_xf"),
            w_xc: x("w_xc"),
            w_xo: x("w_xo"),
            w_hi: h("w_hi"),
            w_hf: h("w_hf"),
            w_hc: h("w_hc"),
            w_ho: h("w_ho"),
            w_ci: h("w_ci"),
            w_cf: h("w_cf"),
            w_co: h("w_co"),
            b_i: b("b_i"),
            b_f: b("b_f"),
            b_c: b("b_c"),
            b_o: b("b_o"),
            peepholes,
            cache: None,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hi.value.shape()[0]
    }

    pub fn in_features(&self) -> usize {
        self.w_xi.value.shape()[1]
    }

    /// One cell update for a single sample. `x_t: [C]`, `h_prev`/`c_prev`:
    /// `[H]`; returns `(h_t, c_t)`.
    pub fn cell_step(
        &self,
        x_t: &Tensor,
        h_prev: &Tensor,
        c_prev: &Tensor,
    ) -> Result<(Tensor, Tensor), NnError> {
        let (h_len, c_len) = (h_prev.len(), c_prev.len());
        if x_t.len() != self.in_features() || h_len != self.hidden() || c_len != h_len {
            return Err(NnError::Geometry {
                layer: "lstm",
                detail: format!(
                    "cell_step shapes x={:?} h={:?} c={:?} vs in={} hidden={}",
                    x_t.shape(),
                    h_prev.shape(),
                    c_prev.shape(),
                    self.in_features(),
                    self.hidden()
                ),
            });
        }
        let x = x_t.clone().reshape(vec![1, x_t.len()])?;
        let h = h_prev.clone().reshape(vec![1, h_len])?;
        let c = c_prev.clone().reshape(vec![1, c_len])?;
        let step = self.step(&x, &h, &c)?;
        let h_new = step.h.reshape(vec![h_len])?;
        let c_new = step.c.reshape(vec![c_len])?;
        Ok((h_new, c_new))
    }

    fn gate_pre(
        &self,
        x: &Tensor,
        h: &Tensor,
        peep: Option<(&Tensor, &Tensor)>,
        w_x: &Tensor,
        w_h: &Tensor,
        b: &Tensor,
    ) -> Result<Tensor, NnError> {
        let mut pre = x.matmul_nt(w_x)?;
        pre.add_assign(&h.matmul_nt(w_h)?)?;
        if let Some((c, w_c)) = peep {
            pre.add_assign(&c.matmul_nt(w_c)?)?;
        }
        let hid = b.len();
        let bd = b.data();
        for s in 0..pre.shape()[0] {
            let row = pre.row_mut(s);
            for j in 0..hid {
                row[j] += bd[j];
            }
        }
        Ok(pre)
    }

    fn step(&self, x: &Tensor, h_prev: &Tensor, c_prev: &Tensor) -> Result<StepOut, NnError> {
        let peep_i = self.peepholes.then(|| (c_prev, &self.w_ci.value));
        let peep_f = self.peepholes.then(|| (c_prev, &self.w_cf.value));
        let peep_o = self.peepholes.then(|| (c_prev, &self.w_co.value));
        let i = self
            .gate_pre(x, h_prev, peep_i, &self.w_xi.value, &self.w_hi.value, &self.b_i.value)?
            .map(sigmoid);
        let f = self
            .gate_pre(x, h_prev, peep_f, &self.w_xf.value, &self.w_hf.value, &self.b_f.value)?
            .map(sigmoid);
        let g = self
            .gate_pre(x, h_prev, None, &self.w_xc.value, &self.w_hc.value, &self.b_c.value)?
            .map(f64::tanh);
        let o = self
            .gate_pre(x, h_prev, peep_o, &self.w_xo.value, &self.w_ho.value, &self.b_o.value)?
            .map(sigmoid);
        let mut c = c_prev.clone();
        for (((cv, &fv), &iv), &gv) in c
            .data_mut()
            .iter_mut()
            .zip(f.data())
            .zip(i.data())
            .zip(g.data())
        {
            *cv = fv * *cv + iv * gv;
        }
        let tanh_c = c.map(f64::tanh);
        let mut h = o.clone();
        for (hv, &tc) in h.data_mut().iter_mut().zip(tanh_c.data()) {
            *hv *= tc;
        }
        Ok(StepOut { i, f, g, o, c, tanh_c, h })
    }

    /// Consumes `[N, C, L]` as a length-L sequence of C-vectors and emits
    /// the hidden-state sequence `[N, H, L]`.
    pub fn forward(&mut self, input: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let n = batch_of(input.shape(), "lstm")?;
        let (c_in, len) = match input.shape() {
            [_, c, l] => (*c, *l),
            other => {
                return Err(NnError::Geometry {
                    layer: "lstm",
                    detail: format!("expected [N, C, L], got {other:?}"),
                })
            }
        };
        if c_in != self.in_features() {
            return Err(NnError::Geometry {
                layer: "lstm",
                detail: format!(
                    "input has {c_in} channels, cell expects {}",
                    self.in_features()
                ),
            });
        }
        let hid = self.hidden();
        let mut h = Tensor::zeros(&[n, hid]);
        let mut c = Tensor::zeros(&[n, hid]);
        let mut out = Tensor::zeros(&[n, hid, len]);
        let mut steps = Vec::with_capacity(len);
        for t in 0..len {
            let mut x_t = Tensor::zeros(&[n, c_in]);
            for s in 0..n {
                for ch in 0..c_in {
                    x_t.set2(s, ch, input.data()[(s * c_in + ch) * len + t]);
                }
            }
            let step = self.step(&x_t, &h, &c)?;
            for s in 0..n {
                for j in 0..hid {
                    out.data_mut()[(s * hid + j) * len + t] = step.h.at2(s, j);
                }
            }
            steps.push(StepCache {
                x: x_t,
                h_prev: h,
                c_prev: c,
                i: step.i,
                f: step.f,
                g: step.g,
                o: step.o,
                tanh_c: step.tanh_c,
            });
            h = step.h;
            c = step.c;
        }
        self.cache = Some(LstmCache {
            steps,
            in_shape: input.shape().to_vec(),
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .take()
            .ok_or(NnError::BackwardBeforeForward { layer: "lstm" })?;
        let (n, c_in, len) = (cache.in_shape[0], cache.in_shape[1], cache.in_shape[2]);
        let hid = self.hidden();
        let mut d_input = Tensor::zeros(&cache.in_shape);
        let mut dh_carry = Tensor::zeros(&[n, hid]);
        let mut dc_carry = Tensor::zeros(&[n, hid]);

        for t in (0..len).rev() {
            let sc = &cache.steps[t];
            // dh = grad from the output sequence + recurrent carry.
            let mut dh = dh_carry;
            for s in 0..n {
                for j in 0..hid {
                    dh.data_mut()[s * hid + j] += grad_out.data()[(s * hid + j) * len + t];
                }
            }
            // h = o . tanh(c)
            let mut d_o_pre = dh.clone();
            for ((g, &o), &tc) in d_o_pre
                .data_mut()
                .iter_mut()
                .zip(sc.o.data())
                .zip(sc.tanh_c.data())
            {
                *g = *g * tc * o * (1.0 - o);
            }
            let mut dc = dc_carry;
            for (((g, &dhv), &o), &tc) in dc
                .data_mut()
                .iter_mut()
                .zip(dh.data())
                .zip(sc.o.data())
                .zip(sc.tanh_c.data())
            {
                *g += dhv * o * (1.0 - tc * tc);
            }
            // c = f . c_prev + i . g
            let mut d_i_pre = dc.clone();
            for ((g, &gv), &iv) in d_i_pre.data_mut().iter_mut().zip(sc.g.data()).zip(sc.i.data()) {
                *g = *g * gv * iv * (1.0 - iv);
            }
            let mut d_f_pre = dc.clone();
            for ((g, &cp), &fv) in d_f_pre
                .data_mut()
                .iter_mut()
                .zip(sc.c_prev.data())
                .zip(sc.f.data())
            {
                *g = *g * cp * fv * (1.0 - fv);
            }
            let mut d_g_pre = dc.clone();
            for ((g, &iv), &gv) in d_g_pre.data_mut().iter_mut().zip(sc.i.data()).zip(sc.g.data()) {
                *g = *g * iv * (1.0 - gv * gv);
            }

            // Parameter gradients.
            self.w_xi.grad.add_assign(&d_i_pre.matmul_tn(&sc.x)?)?;
            self.w_xf.grad.add_assign(&d_f_pre.matmul_tn(&sc.x)?)?;
            self.w_xc.grad.add_assign(&d_g_pre.matmul_tn(&sc.x)?)?;
            self.w_xo.grad.add_assign(&d_o_pre.matmul_tn(&sc.x)?)?;
            self.w_hi.grad.add_assign(&d_i_pre.matmul_tn(&sc.h_prev)?)?;
            self.w_hf.grad.add_assign(&d_f_pre.matmul_tn(&sc.h_prev)?)?;
            self.w_hc.grad.add_assign(&d_g_pre.matmul_tn(&sc.h_prev)?)?;
            self.w_ho.grad.add_assign(&d_o_pre.matmul_tn(&sc.h_prev)?)?;
            if self.peepholes {
                self.w_ci.grad.add_assign(&d_i_pre.matmul_tn(&sc.c_prev)?)?;
                self.w_cf.grad.add_assign(&d_f_pre.matmul_tn(&sc.c_prev)?)?;
                self.w_co.grad.add_assign(&d_o_pre.matmul_tn(&sc.c_prev)?)?;
            }
            for (param, d_pre) in [
                (&mut self.b_i, &d_i_pre),
                (&mut self.b_f, &d_f_pre),
                (&mut self.b_c, &d_g_pre),
                (&mut self.b_o, &d_o_pre),
            ] {
                let bg = param.grad.data_mut();
                for s in 0..n {
                    let row = d_pre.row(s);
                    for j in 0..hid {
                        bg[j] += row[j];
                    }
                }
            }

            // Input gradient for this step.
            let mut dx = d_i_pre.matmul(&self.w_xi.value)?;
            dx.add_assign(&d_f_pre.matmul(&self.w_xf.value)?)?;
            dx.add_assign(&d_g_pre.matmul(&self.w_xc.value)?)?;
            dx.add_assign(&d_o_pre.matmul(&self.w_xo.value)?)?;
            for s in 0..n {
                for ch in 0..c_in {
                    d_input.data_mut()[(s * c_in + ch) * len + t] = dx.at2(s, ch);
                }
            }

            // Carries to step t-1.
            let mut dh_prev = d_i_pre.matmul(&self.w_hi.value)?;
            dh_prev.add_assign(&d_f_pre.matmul(&self.w_hf.value)?)?;
            dh_prev.add_assign(&d_g_pre.matmul(&self.w_hc.value)?)?;
            dh_prev.add_assign(&d_o_pre.matmul(&self.w_ho.value)?)?;
            let mut dc_prev = dc;
            for (g, &fv) in dc_prev.data_mut().iter_mut().zip(sc.f.data()) {
                *g *= fv;
            }
            if self.peepholes {
                dc_prev.add_assign(&d_i_pre.matmul(&self.w_ci.value)?)?;
                dc_prev.add_assign(&d_f_pre.matmul(&self.w_cf.value)?)?;
                dc_prev.add_assign(&d_o_pre.matmul(&self.w_co.value)?)?;
            }
            dh_carry = dh_prev;
            dc_carry = dc_prev;
        }
        Ok(d_input)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![
            &self.w_xi, &self.w_xf, &self.w_xc, &self.w_xo,
            &self.w_hi, &self.w_hf, &self.w_hc, &self.w_ho,
            &self.w_ci, &self.w_cf, &self.w_co,
            &self.b_i, &self.b_f, &self.b_c, &self.b_o,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.w_xi, &mut self.w_xf, &mut self.w_xc, &mut self.w_xo,
            &mut self.w_hi, &mut self.w_hf, &mut self.w_hc, &mut self.w_ho,
            &mut self.w_ci, &mut self.w_cf, &mut self.w_co,
            &mut self.b_i, &mut self.b_f, &mut self.b_c, &mut self.b_o,
        ]
    }
}

struct StepOut {
    i: Tensor,
    f: Tensor,
    g: Tensor,
    o: Tensor,
    c: Tensor,
    tanh_c: Tensor,
    h: Tensor,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_everything_stays_zero() {
        let cell = Lstm::zeros(3, 2, true);
        let (h, c) = cell
            .cell_step(
                &Tensor::from_slice(&[1.0, -2.0, 0.5]),
                &Tensor::zeros(&[2]),
                &Tensor::zeros(&[2]),
            )
            .unwrap();
        assert_eq!(h.data(), &[0.0, 0.0]);
        assert_eq!(c.data(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_weights_with_unit_cell_state() {
        // i = f = o = sigma(0) = 0.5, g = tanh(0) = 0,
        // c = 0.5 * 1 = 0.5, h = 0.5 * tanh(0.5).
        let cell = Lstm::zeros(2, 2, true);
        let (h, c) = cell
            .cell_step(
                &Tensor::zeros(&[2]),
                &Tensor::zeros(&[2]),
                &Tensor::filled(&[2], 1.0),
            )
            .unwrap();
        for &cv in c.data() {
            assert!((cv - 0.5).abs() < 1e-12);
        }
        for &hv in h.data() {
            assert!((hv - 0.23106).abs() < 1e-5);
        }
    }

    #[test]
    fn saturated_forget_gate_preserves_cell_state() {
        let mut cell = Lstm::zeros(2, 2, true);
        cell.b_f.value.fill(10.0);
        let c_prev = Tensor::from_slice(&[0.8, -1.5]);
        let (_, c) = cell
            .cell_step(&Tensor::zeros(&[2]), &Tensor::zeros(&[2]), &c_prev)
            .unwrap();
        let keep = sigmoid(10.0);
        for (got, want) in c.data().iter().zip(c_prev.data()) {
            assert!((got - want * keep).abs() < 1e-9);
        }
    }

    #[test]
    fn sequence_forward_matches_repeated_cell_steps() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(29, "lstm-seq");
        let (c_in, hid, len) = (3, 4, 5);
        let mut cell = Lstm::zeros(c_in, hid, true);
        for p in cell.params_mut() {
            if p.value.rank() == 2 {
                for v in p.value.data_mut() {
                    *v = rng.gen_range(-0.5..0.5);
                }
            }
        }
        let input = Tensor::new(
            vec![1, c_in, len],
            (0..c_in * len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let out = cell.forward(&input, Mode::Train).unwrap();

        let mut h = Tensor::zeros(&[hid]);
        let mut c = Tensor::zeros(&[hid]);
        for t in 0..len {
            let x_t = Tensor::from_slice(
                &(0..c_in)
                    .map(|ch| input.data()[ch * len + t])
                    .collect::<Vec<_>>(),
            );
            let (h2, c2) = cell.cell_step(&x_t, &h, &c).unwrap();
            h = h2;
            c = c2;
            for j in 0..hid {
                assert!((out.data()[j * len + t] - h.data()[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_geometry_error() {
        let cell = Lstm::zeros(3, 2, true);
        let err = cell.cell_step(
            &Tensor::zeros(&[4]),
            &Tensor::zeros(&[2]),
            &Tensor::zeros(&[2]),
        );
        assert!(matches!(err, Err(NnError::Geometry { .. })));
    }
}
