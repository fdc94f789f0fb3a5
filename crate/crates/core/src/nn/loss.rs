//! Binary cross-entropy over all tensor elements.

use super::tensor::{shape_err, NnError, Tensor4};

/// Predicted probabilities are clamped into this range before the loss so
/// the logs stay finite.
pub const PROB_CLAMP: (f64, f64) = (1e-7, 1.0 - 1e-7);

/// Clamp sigmoid outputs away from {0, 1} in place.
pub fn clamp_probabilities(t: &mut Tensor4) {
    for v in t.values.iter_mut() {
        *v = v.clamp(PROB_CLAMP.0, PROB_CLAMP.1);
    }
}

/// Mean binary cross-entropy and its gradient w.r.t. the predictions.
/// `pred` must lie strictly inside (0, 1); `target` in {0, 1}.
pub fn bce_loss(pred: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4), NnError> {
    if !pred.same_dims(target) {
        return Err(shape_err(
            "bce loss",
            format!("{:?}", pred.dims()),
            format!("{:?}", target.dims()),
        ));
    }
    let count = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor4::zeros(pred.n, pred.c, pred.h, pred.w);
    for i in 0..pred.len() {
        let p = pred.values[i];
        let t = target.values[i];
        debug_assert!(p > 0.0 && p < 1.0, "bce prediction out of (0,1): {p}");
        loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        grad.values[i] = (p - t) / (p * (1.0 - p)) / count;
    }
    Ok((loss / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matching_prediction_has_negligible_loss() {
        let mut pred = Tensor4::from_values(1, 1, 2, 2, vec![1.0, 0.0, 1.0, 0.0]);
        clamp_probabilities(&mut pred);
        let target = Tensor4::from_values(1, 1, 2, 2, vec![1.0, 0.0, 1.0, 0.0]);
        let (loss, _) = bce_loss(&pred, &target).unwrap();
        assert!(loss <= 1e-6, "loss {loss}");
    }

    #[test]
    fn uniform_half_prediction_costs_log_two() {
        let pred = Tensor4::from_values(1, 1, 2, 3, vec![0.5; 6]);
        let target = Tensor4::from_values(1, 1, 2, 3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let (loss, _) = bce_loss(&pred, &target).unwrap();
        assert_relative_eq!(loss, 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let pred = Tensor4::zeros(1, 1, 2, 2);
        let target = Tensor4::zeros(1, 1, 2, 3);
        assert!(bce_loss(&pred, &target).is_err());
    }
}
