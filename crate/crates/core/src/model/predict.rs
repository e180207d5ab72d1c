//! Turning logits into label decisions.

use crate::error::{Error, Result};
use crate::model::config::Task;
use crate::ops::activation::{sigmoid_scalar, softmax_in_place};
use crate::real::Real;
use crate::tensor::Tensor3;

/// Per-row class probabilities: softmax for multi-class, independent
/// sigmoids for multi-label.
pub fn probabilities<T: Real>(logits: &Tensor3<T>, task: Task) -> Vec<Vec<f64>> {
    (0..logits.batch())
        .map(|b| {
            let row: Vec<f64> = logits.row(b).iter().map(|v| v.as_f64()).collect();
            match task {
                Task::MultiClass => {
                    let mut r = row;
                    softmax_in_place(&mut r);
                    r
                }
                Task::MultiLabel => row.into_iter().map(sigmoid_scalar).collect(),
            }
        })
        .collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicted label sets, one per batch row. Multi-class rows hold exactly
/// one label; multi-label rows hold every class with
/// `sigmoid(logit) >= threshold`.
pub fn predict<T: Real>(
    logits: &Tensor3<T>,
    task: Task,
    thresholds: Option<&[f64]>,
) -> Result<Vec<Vec<usize>>> {
    let probs = probabilities(logits, task);
    match task {
        Task::MultiClass => Ok(probs.iter().map(|p| vec![argmax(p)]).collect()),
        Task::MultiLabel => {
            let th = thresholds
                .ok_or_else(|| Error::invalid("multi-label prediction needs per-class thresholds"))?;
            if th.len() != logits.row_len() {
                return Err(Error::shape(format!(
                    "{} thresholds for {} classes",
                    th.len(),
                    logits.row_len()
                )));
            }
            Ok(probs
                .iter()
                .map(|p| (0..p.len()).filter(|&c| p[c] >= th[c]).collect())
                .collect())
        }
    }
}
