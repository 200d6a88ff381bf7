use crate::linalg::Matrix;
use crate::{Error, Result};

/// Probabilities are clipped to `[PROB_FLOOR, 1]` before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

fn check_inputs(probs: &Matrix, labels: &[u8], weights: &[f64]) -> Result<f64> {
    if labels.len() != probs.rows() {
        return Err(Error::DimensionMismatch {
            expected: probs.rows(),
            got: labels.len(),
        });
    }
    if weights.len() != probs.rows() {
        return Err(Error::DimensionMismatch {
            expected: probs.rows(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Domain("sample weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(total)
}

/// `(1/Σw) Σ wᵢ · (−ln pᵢ[Yᵢ])`
pub fn weighted_cross_entropy(probs: &Matrix, labels: &[u8], weights: &[f64]) -> Result<f64> {
    let total = check_inputs(probs, labels, weights)?;
    let sum: f64 = (0..probs.rows())
        .map(|i| {
            let p = probs.get(i, labels[i] as usize).clamp(PROB_FLOOR, 1.0);
            weights[i] * -libm::log(p)
        })
        .sum();
    Ok(sum / total)
}

/// Gradient of [`weighted_cross_entropy`] w.r.t. the softmax logits.
pub fn softmax_ce_grad(probs: &Matrix, labels: &[u8], weights: &[f64]) -> Result<Matrix> {
    let total = check_inputs(probs, labels, weights)?;
    let mut g = probs.clone();
    for i in 0..g.rows() {
        let scale = weights[i] / total;
        let row = g.row_mut(i);
        row[labels[i] as usize] -= 1.0;
        row.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(g)
}

/// Positive iff `p(proximity) >= 0.5`.
#[inline]
pub fn predict(probs: &[f64]) -> u8 {
    u8::from(probs[1] >= 0.5)
}

#[cfg(test)]
fn row_losses(probs: &Matrix, labels: &[u8]) -> alloc::vec::Vec<f64> {
    (0..probs.rows())
        .map(|i| -libm::log(probs.get(i, labels[i] as usize).clamp(PROB_FLOOR, 1.0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn perfect_predictions_cost_nothing() {
        let p = Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(weighted_cross_entropy(&p, &[1, 0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_predictions_cost_ln2() {
        let p = Matrix::from_vec(3, 2, vec![0.5; 6]).unwrap();
        let l = weighted_cross_entropy(&p, &[0, 1, 1], &[1.0; 3]).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let p = Matrix::from_vec(2, 2, vec![0.3, 0.7, 0.9, 0.1]).unwrap();
        let l = weighted_cross_entropy(&p, &[1, 1], &[2.0, 0.0]).unwrap();
        assert!((l - row_losses(&p, &[1, 1])[0]).abs() < 1e-15);
    }

    #[test]
    fn all_zero_weights_are_an_error() {
        let p = Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap();
        assert_eq!(weighted_cross_entropy(&p, &[1], &[0.0]), Err(Error::ZeroWeights));
    }

    #[test]
    fn clipping_keeps_loss_finite() {
        let p = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let l = weighted_cross_entropy(&p, &[1], &[1.0]).unwrap();
        assert!((l - 12.0 * core::f64::consts::LN_10).abs() < 1e-9);
    }

    #[test]
    fn prediction_threshold() {
        assert_eq!(predict(&[0.3, 0.7]), 1);
        assert_eq!(predict(&[0.5, 0.5]), 1);
        assert_eq!(predict(&[0.9, 0.1]), 0);
    }
}
