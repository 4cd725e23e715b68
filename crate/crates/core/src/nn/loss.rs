//! Binary cross-entropy on predicted probabilities.

use super::NnError;
use crate::tensor::Tensor;

/// Probabilities are clamped into `[EPS_P, 1 - EPS_P]` before the logarithms.
pub const EPS_P: f64 = 1e-12;

/// `-(1/N) * sum(y ln p + (1-y) ln(1-p))` over matching-shape tensors.
pub fn bce_loss(y: &Tensor, p: &Tensor) -> Result<f64, NnError> {
    check_pair(y, p)?;
    let n = y.len() as f64;
    let mut total = 0.0;
    for (&yi, &pi) in y.data().iter().zip(p.data()) {
        let pc = pi.clamp(EPS_P, 1.0 - EPS_P);
        total += yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln();
    }
    Ok(-total / n)
}

/// Gradient of [`bce_loss`] with respect to `p`. Where `p` sits outside the
/// clamp range the loss surface is flat, so the gradient is zero there.
pub fn bce_grad(y: &Tensor, p: &Tensor) -> Result<Tensor, NnError> {
    check_pair(y, p)?;
    let n = y.len() as f64;
    let mut grad = Tensor::zeros(p.shape());
    for ((g, &yi), &pi) in grad.data_mut().iter_mut().zip(y.data()).zip(p.data()) {
        if pi <= EPS_P || pi >= 1.0 - EPS_P {
            *g = 0.0;
        } else {
            *g = -(yi / pi - (1.0 - yi) / (1.0 - pi)) / n;
        }
    }
    Ok(grad)
}

fn check_pair(y: &Tensor, p: &Tensor) -> Result<(), NnError> {
    if y.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if y.shape() != p.shape() {
        return Err(NnError::Geometry {
            layer: "bce",
            detail: format!("labels {:?} vs probabilities {:?}", y.shape(), p.shape()),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_almost_zero() {
        let y = Tensor::from_slice(&[1.0]);
        let p = Tensor::from_slice(&[1.0 - 1e-12]);
        assert!(bce_loss(&y, &p).unwrap() < 1e-11);
    }

    #[test]
    fn coin_flip_costs_ln_two() {
        let y = Tensor::from_slice(&[1.0]);
        let p = Tensor::from_slice(&[0.5]);
        assert!((bce_loss(&y, &p).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_two_sample_case() {
        let y = Tensor::from_slice(&[1.0, 0.0]);
        let p = Tensor::from_slice(&[0.9, 0.1]);
        // -(ln 0.9 + ln 0.9) / 2 = -ln 0.9
        assert!((bce_loss(&y, &p).unwrap() - 0.105361).abs() < 1e-6);
    }

    #[test]
    fn loss_is_nonnegative_and_zero_only_when_clamped_perfect() {
        let y = Tensor::from_slice(&[1.0, 0.0, 1.0]);
        let p = Tensor::from_slice(&[0.2, 0.7, 0.99]);
        assert!(bce_loss(&y, &p).unwrap() > 0.0);
        let perfect = Tensor::from_slice(&[1.0, 0.0, 1.0]);
        assert!(bce_loss(&y, &perfect).unwrap() < 1e-11);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let e = Tensor::from_slice(&[]);
        assert!(matches!(bce_loss(&e, &e), Err(NnError::EmptyBatch)));
    }

    #[test]
    fn grad_matches_finite_difference_of_loss() {
        let y = Tensor::from_slice(&[1.0, 0.0]);
        let p = Tensor::from_slice(&[0.3, 0.6]);
        let g = bce_grad(&y, &p).unwrap();
        let h = 1e-7;
        for k in 0..2 {
            let mut plus = p.clone();
            plus.data_mut()[k] += h;
            let mut minus = p.clone();
            minus.data_mut()[k] -= h;
            let fd = (bce_loss(&y, &plus).unwrap() - bce_loss(&y, &minus).unwrap()) / (2.0 * h);
            assert!((g.data()[k] - fd).abs() < 1e-6);
        }
    }
}
