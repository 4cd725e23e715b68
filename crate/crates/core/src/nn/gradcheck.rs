//! Central finite-difference verification of the backward pass.
//!
//! Compares `(f(theta+h) - f(theta-h)) / 2h` against the analytic gradient
//! for every scalar parameter of a stack. The relative error denominator is
//! floored at 1e-4 so that near-zero gradients are compared at that absolute
//! scale instead of amplifying round-off noise.

use rand::Rng;

use super::{bce_grad, bce_loss, Mode, NnError, Sequential};
use crate::seed::rng_for;
use crate::tensor::Tensor;

const REL_FLOOR: f64 = 1e-4;

/// Scalar objective used to drive the check.
pub enum CheckLoss {
    /// `sum(r_i * out_i)` with fixed pseudo-random weights `r_i in [0.5, 1.5)`
    /// that break cancellation symmetry across output elements.
    WeightedSum { seed: u64 },
    /// Binary cross-entropy against the given labels; the stack must emit
    /// one probability per label.
    Bce { labels: Tensor },
}

impl CheckLoss {
    fn weights(&self, len: usize) -> Option<Vec<f64>> {
        match self {
            CheckLoss::WeightedSum { seed } => {
                let mut rng = rng_for(*seed, "gradcheck-weights");
                Some((0..len).map(|_| rng.gen_range(0.5..1.5)).collect())
            }
            CheckLoss::Bce { .. } => None,
        }
    }

    fn loss(&self, out: &Tensor) -> Result<f64, NnError> {
        match self {
            CheckLoss::WeightedSum { .. } => {
                let w = self.weights(out.len()).unwrap();
                Ok(out.data().iter().zip(&w).map(|(o, r)| o * r).sum())
            }
            CheckLoss::Bce { labels } => {
                let p = out.clone().reshape(labels.shape().to_vec())?;
                bce_loss(labels, &p)
            }
        }
    }

    fn grad(&self, out: &Tensor) -> Result<Tensor, NnError> {
        match self {
            CheckLoss::WeightedSum { .. } => {
                let w = self.weights(out.len()).unwrap();
                let mut g = Tensor::zeros(out.shape());
                for (gv, r) in g.data_mut().iter_mut().zip(w) {
                    *gv = r;
                }
                Ok(g)
            }
            CheckLoss::Bce { labels } => {
                let p = out.clone().reshape(labels.shape().to_vec())?;
                Ok(bce_grad(labels, &p)?.reshape(out.shape().to_vec())?)
            }
        }
    }
}

/// One row per parameter tensor.
#[derive(Debug, Clone)]
pub struct FdEntry {
    pub param: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub tol: f64,
    pub entries: Vec<FdEntry>,
}

impl FdReport {
    /// True when every parameter passed (vacuously true with no parameters).
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn worst(&self) -> Option<&FdEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Backward-pass gradients per named parameter.
pub fn analytic_gradients(
    graph: &mut Sequential,
    input: &Tensor,
    loss: &CheckLoss,
    mode: Mode,
) -> Result<Vec<(String, Tensor)>, NnError> {
    graph.zero_grads();
    let out = graph.forward(input, mode)?;
    let g = loss.grad(&out)?;
    graph.backward(&g)?;
    Ok(graph
        .named_gradients()
        .into_iter()
        .map(|(name, grad)| (name, grad.clone()))
        .collect())
}

/// Central-difference gradients per named parameter.
pub fn numeric_gradients(
    graph: &mut Sequential,
    input: &Tensor,
    loss: &CheckLoss,
    mode: Mode,
    h: f64,
) -> Result<Vec<(String, Tensor)>, NnError> {
    let names: Vec<String> = graph
        .named_params()
        .into_iter()
        .map(|(name, _)| name)
        .collect();
    let mut out = Vec::with_capacity(names.len());
    for (pi, name) in names.into_iter().enumerate() {
        let len = graph.params()[pi].value.len();
        let mut grad = Tensor::zeros(graph.params()[pi].value.shape());
        for k in 0..len {
            let original = graph.params()[pi].value.data()[k];
            graph.params_mut()[pi].value.data_mut()[k] = original + h;
            let plus = loss.loss(&graph.forward(input, mode)?)?;
            graph.params_mut()[pi].value.data_mut()[k] = original - h;
            let minus = loss.loss(&graph.forward(input, mode)?)?;
            graph.params_mut()[pi].value.data_mut()[k] = original;
            grad.data_mut()[k] = (plus - minus) / (2.0 * h);
        }
        out.push((name, grad));
    }
    Ok(out)
}

/// Per-parameter comparison of two gradient maps.
pub fn compare_gradients(
    analytic: &[(String, Tensor)],
    numeric: &[(String, Tensor)],
    tol: f64,
) -> FdReport {
    let entries = analytic
        .iter()
        .zip(numeric)
        .map(|((name, a), (_, n))| {
            let max_rel_err = a
                .data()
                .iter()
                .zip(n.data())
                .map(|(&av, &nv)| (av - nv).abs() / av.abs().max(nv.abs()).max(REL_FLOOR))
                .fold(0.0, f64::max);
            FdEntry {
                param: name.clone(),
                max_rel_err,
                pass: max_rel_err <= tol,
            }
        })
        .collect();
    FdReport { tol, entries }
}

/// Full check: analytic vs central differences for every scalar parameter.
pub fn finite_diff_check(
    graph: &mut Sequential,
    input: &Tensor,
    loss: &CheckLoss,
    mode: Mode,
    h: f64,
    tol: f64,
) -> Result<FdReport, NnError> {
    let analytic = analytic_gradients(graph, input, loss, mode)?;
    let numeric = numeric_gradients(graph, input, loss, mode, h)?;
    Ok(compare_gradients(&analytic, &numeric, tol))
}
