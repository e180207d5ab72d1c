//! Classification losses on `[batch, classes, 1]` logits. Both use mean
//! reduction and return the gradient with respect to the logits.

use crate::error::{Error, Result};
use crate::ops::activation::{sigmoid_scalar, softmax_in_place};
use crate::real::Real;
use crate::tensor::Tensor3;

/// Softmax cross-entropy against class indices, averaged over the batch.
pub fn cross_entropy<T: Real>(logits: &Tensor3<T>, targets: &[usize]) -> Result<(T, Tensor3<T>)> {
    let batch = logits.batch();
    let classes = logits.row_len();
    if targets.len() != batch {
        return Err(Error::shape(format!(
            "{} targets for a batch of {batch}",
            targets.len()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::invalid(format!(
            "target class {bad} out of range for {classes} classes"
        )));
    }
    let inv_b = T::one() / T::lit(batch as f64);
    let mut grad = Tensor3::zeros(batch, logits.channels(), logits.length());
    let mut loss = T::zero();
    for (b, &target) in targets.iter().enumerate() {
        let row = logits.row(b);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += lse - row[target];
        let g = grad.row_mut(b);
        g.copy_from_slice(row);
        softmax_in_place(g);
        g[target] -= T::one();
        for v in g.iter_mut() {
            *v *= inv_b;
        }
    }
    Ok((loss * inv_b, grad))
}

/// Sigmoid binary cross-entropy against `{0, 1}` targets laid out like the
/// logits, averaged over every element. Evaluated as
/// `max(z, 0) - z*y + ln(1 + exp(-|z|))`.
pub fn binary_cross_entropy<T: Real>(logits: &Tensor3<T>, targets: &[T]) -> Result<(T, Tensor3<T>)> {
    if targets.len() != logits.len() {
        return Err(Error::shape(format!(
            "{} targets for logits {:?}",
            targets.len(),
            logits.shape()
        )));
    }
    if targets.iter().any(|&t| t != T::zero() && t != T::one()) {
        return Err(Error::invalid("binary targets must be 0 or 1"));
    }
    let inv_n = T::one() / T::lit(logits.len() as f64);
    let mut grad = Tensor3::zeros(logits.batch(), logits.channels(), logits.length());
    let mut loss = T::zero();
    for ((g, &z), &y) in grad.data_mut().iter_mut().zip(logits.data()).zip(targets) {
        loss += z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p();
        *g = (sigmoid_scalar(z) - y) * inv_n;
    }
    Ok((loss * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_classes() {
        let logits = Tensor3::<f64>::zeros(3, 4, 1);
        let (loss, _) = cross_entropy(&logits, &[0, 1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_at_zero_logit() {
        let logits = Tensor3::<f64>::zeros(1, 1, 1);
        let (loss, grad) = binary_cross_entropy(&logits, &[1.0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert!((grad.data()[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        let logits = Tensor3::from_vec(1, 2, 1, vec![500.0f64, -500.0]).unwrap();
        let (loss, _) = binary_cross_entropy(&logits, &[1.0, 0.0]).unwrap();
        assert!(loss.is_finite() && loss < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_target() {
        let logits = Tensor3::<f64>::zeros(1, 4, 1);
        assert!(cross_entropy(&logits, &[4]).is_err());
        assert!(binary_cross_entropy(&logits, &[0.0, 1.0, 0.5, 0.0]).is_err());
    }
}
