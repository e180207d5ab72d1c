//! Lead-wise Grad-CAM.
//!
//! For backbone `i` with final activation `A_i` (`[D, L_feat]`, the output
//! of its last residual block) and feature `f_i = GAP(A_i)`:
//!
//! ```text
//! w_i[d] = mean_t d score / d A_i[d, t] = (d score / d f_i[d]) / L_feat
//! C_i[t] = ReLU(sum_d w_i[d] * A_i[d, t])
//! M_i    = minmax(upsample(alpha_i * C_i))         (constant map -> zeros)
//! ```
//!
//! The score gradient with respect to `f_i` flows through both the
//! attention-weighted sum and the attention scoring network.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::config::INPUT_LEADS;
use crate::model::config::Task;
use crate::model::net::LeadwiseNet;
use crate::real::Real;
use crate::tensor::Tensor3;

/// Explanation of one record for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub class_id: usize,
    /// Attention score per lead.
    pub alpha: [f64; INPUT_LEADS],
    /// Raw maps `C_i` at feature resolution, non-negative.
    pub cams: [Vec<f32>; INPUT_LEADS],
    /// Normalized overlays `M_i` at input resolution, in `[0, 1]`.
    pub maps: [Vec<f32>; INPUT_LEADS],
}

/// `ReLU(sum_d (g[d] / L) * A[d, t])` for every batch row.
pub fn cam_from_activation<T: Real>(activation: &Tensor3<T>, grad_features: &Tensor3<T>) -> Result<Vec<Vec<f32>>> {
    let (batch, dim, len) = activation.shape();
    if grad_features.shape() != (batch, dim, 1) {
        return Err(Error::shape(format!(
            "feature gradient {:?} does not match activation {:?}",
            grad_features.shape(),
            activation.shape()
        )));
    }
    let inv_len = 1.0 / len as f64;
    Ok((0..batch)
        .map(|b| {
            let mut cam = vec![0.0f64; len];
            for d in 0..dim {
                let w = grad_features.at(b, d, 0).as_f64() * inv_len;
                if w == 0.0 {
                    continue;
                }
                for (c, &a) in cam.iter_mut().zip(activation.lane(b, d)) {
                    *c += w * a.as_f64();
                }
            }
            cam.into_iter().map(|v| v.max(0.0) as f32).collect()
        })
        .collect())
}

/// Linear interpolation to `out_len` samples with half-sample alignment
/// (each output sample maps to `(t + 0.5) * in/out - 0.5`, clamped).
pub fn upsample_linear(values: &[f32], out_len: usize) -> Vec<f32> {
    let n = values.len();
    if n == 0 {
        return vec![0.0; out_len];
    }
    if n == 1 {
        return vec![values[0]; out_len];
    }
    let scale = n as f64 / out_len as f64;
    (0..out_len)
        .map(|t| {
            let src = ((t as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (src.floor() as usize).min(n - 2);
            let frac = src - i as f64;
            ((1.0 - frac) * values[i] as f64 + frac * values[i + 1] as f64) as f32
        })
        .collect()
}

/// Maps to `[0, 1]` by min-max; a constant input maps to all zeros.
pub fn minmax_normalize(values: &[f32]) -> Vec<f32> {
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    let range = (hi - lo) as f64;
    values
        .iter()
        .map(|&v| (((v - lo) as f64) / range).clamp(0.0, 1.0) as f32)
        .collect()
}

/// `M = minmax(upsample(alpha * C))`.
pub fn overlay(cam: &[f32], alpha: f64, out_len: usize) -> Vec<f32> {
    let scaled: Vec<f32> = cam.iter().map(|&c| (alpha * c as f64) as f32).collect();
    minmax_normalize(&upsample_linear(&scaled, out_len))
}

fn check_classes(model: &LeadwiseNet<f32>, classes: &[usize], batch: usize) -> Result<()> {
    if classes.len() != batch {
        return Err(Error::shape(format!("{} class ids for {batch} records", classes.len())));
    }
    let n = model.config.n_classes;
    if let Some(&c) = classes.iter().find(|&&c| c >= n) {
        return Err(Error::invalid(format!("class id {c} out of range for {n} classes")));
    }
    Ok(())
}

/// Quantity whose gradient weights the feature channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CamScore {
    /// The pre-activation class logit (standard Grad-CAM).
    #[default]
    Logit,
    /// The class log-probability. For a softmax head the gradient with
    /// respect to the logits is `e_c - p`, which cancels evidence shared by
    /// every class; for a sigmoid head it is a positive multiple of the
    /// logit gradient and yields the same normalized maps.
    LogProb,
}

impl fmt::Display for CamScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            CamScore::Logit => "logit",
            CamScore::LogProb => "log_prob",
        })
    }
}

impl FromStr for CamScore {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "logit" => Ok(CamScore::Logit),
            "log_prob" | "log-prob" => Ok(CamScore::LogProb),
            other => Err(Error::Config(format!(
                "unknown explanation score `{other}` (expected logit or log_prob)"
            ))),
        }
    }
}

/// Explains each row of `x` (`[B, 3, L]`) for its class in `classes`,
/// differentiating the class logit.
pub fn explain_batch(model: &mut LeadwiseNet<f32>, x: &Tensor3<f32>, classes: &[usize]) -> Result<Vec<Explanation>> {
    explain_batch_with(model, x, classes, CamScore::Logit)
}

/// [`explain_batch`] with a choice of differentiated score.
pub fn explain_batch_with(
    model: &mut LeadwiseNet<f32>,
    x: &Tensor3<f32>,
    classes: &[usize],
    score: CamScore,
) -> Result<Vec<Explanation>> {
    check_classes(model, classes, x.batch())?;
    let out = model.forward_eval(x)?;
    let n = model.config.n_classes;
    let mut grad = Tensor3::zeros(x.batch(), n, 1);
    for (b, &c) in classes.iter().enumerate() {
        match (score, model.config.task) {
            (CamScore::LogProb, Task::MultiClass) => {
                let p = softmax_row(out.logits.row(b));
                for (k, pk) in p.into_iter().enumerate() {
                    grad.set(b, k, 0, -pk);
                }
                grad.set(b, c, 0, grad.at(b, c, 0) + 1.0);
            }
            _ => grad.set(b, c, 0, 1.0),
        }
    }
    let feature_grads = model.feature_gradients(&grad)?;
    let mut per_lead = Vec::with_capacity(INPUT_LEADS);
    for (bb, g) in model.backbones.iter().zip(&feature_grads) {
        let act = bb
            .last_activation()
            .ok_or_else(|| Error::invalid("backbone activation missing after forward"))?;
        per_lead.push(cam_from_activation(act, g)?);
    }
    model.clear_cache();
    let length = x.length();
    Ok((0..x.batch())
        .map(|b| {
            let alpha = std::array::from_fn(|i| out.alpha.at(b, i, 0) as f64);
            let cams: [Vec<f32>; INPUT_LEADS] = std::array::from_fn(|i| per_lead[i][b].clone());
            let maps = std::array::from_fn(|i| overlay(&cams[i], alpha[i], length));
            Explanation {
                class_id: classes[b],
                alpha,
                cams,
                maps,
            }
        })
        .collect())
}

fn softmax_row(logits: &[f32]) -> Vec<f32> {
    let m = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let e: Vec<f64> = logits.iter().map(|&v| ((v - m) as f64).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| (v / z) as f32).collect()
}

/// Raw per-backbone maps `(C_1, C_2, C_3)` for a single record `[1, 3, L]`.
pub fn grad_cam_per_backbone(
    model: &mut LeadwiseNet<f32>,
    x: &Tensor3<f32>,
    class_id: usize,
) -> Result<[Vec<f32>; INPUT_LEADS]> {
    Ok(lead_wise_explanation(model, x, class_id)?.cams)
}

/// Full explanation for a single record `[1, 3, L]`.
pub fn lead_wise_explanation(model: &mut LeadwiseNet<f32>, x: &Tensor3<f32>, class_id: usize) -> Result<Explanation> {
    lead_wise_explanation_with(model, x, class_id, CamScore::Logit)
}

/// [`lead_wise_explanation`] with a choice of differentiated score.
pub fn lead_wise_explanation_with(
    model: &mut LeadwiseNet<f32>,
    x: &Tensor3<f32>,
    class_id: usize,
    score: CamScore,
) -> Result<Explanation> {
    if x.batch() != 1 {
        return Err(Error::shape(format!("expected one record, got input {:?}", x.shape())));
    }
    Ok(explain_batch_with(model, x, &[class_id], score)?.remove(0))
}

/// Share of total overlay mass (summed over the three leads) that falls
/// inside `mask`; 0 when every map is zero.
pub fn mass_inside(explanation: &Explanation, mask: &[Range<usize>]) -> f64 {
    let mut inside = 0.0;
    let mut total = 0.0;
    for m in &explanation.maps {
        total += m.iter().map(|&v| v as f64).sum::<f64>();
        for r in mask {
            let hi = r.end.min(m.len());
            if r.start < hi {
                inside += m[r.start..hi].iter().map(|&v| v as f64).sum::<f64>();
            }
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{conv1d_forward, global_avg_pool, ConvParams};

    #[test]
    fn toy_linear_model_closed_form() {
        // score = v . GAP(conv(x)); d score / d f = v, so
        // C[t] = ReLU(sum_d v[d] / L * conv(x)[d, t]).
        let mut p = ConvParams::<f64>::new(1, 2, 3, 1, 1, 1, false).unwrap();
        p.weight = vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5];
        let x = Tensor3::from_vec(1, 1, 6, vec![0.0, 1.0, 3.0, 2.0, -1.0, 0.5]).unwrap();
        let a = conv1d_forward(&x, &p).unwrap();
        let v = [2.0, -1.0];
        let g = Tensor3::from_vec(1, 2, 1, v.to_vec()).unwrap();
        let cam = cam_from_activation(&a, &g).unwrap();
        let len = a.length() as f64;
        for t in 0..a.length() {
            let expected = (v[0] / len * a.at(0, 0, t) + v[1] / len * a.at(0, 1, t)).max(0.0);
            assert!((cam[0][t] as f64 - expected).abs() < 1e-6);
        }
        assert_eq!(global_avg_pool(&a).unwrap().shape(), (1, 2, 1));
    }

    #[test]
    fn zero_gradient_gives_zero_cam() {
        let a = Tensor3::<f32>::filled(1, 3, 4, 2.0);
        let g = Tensor3::zeros(1, 3, 1);
        assert_eq!(cam_from_activation(&a, &g).unwrap()[0], vec![0.0; 4]);
    }

    #[test]
    fn minmax_contract_and_scale_invariance() {
        let cam = [0.0f32, 1.0, 4.0, 2.0];
        let m1 = overlay(&cam, 0.3, 40);
        let m2 = overlay(&cam, 0.6, 40);
        assert_eq!(m1.iter().copied().fold(f32::MIN, f32::max), 1.0);
        assert_eq!(m1.iter().copied().fold(f32::MAX, f32::min), 0.0);
        for (a, b) in m1.iter().zip(&m2) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(overlay(&cam, 0.0, 10), vec![0.0; 10]);
    }

    #[test]
    fn upsampling_preserves_constants_and_endpoints() {
        assert_eq!(upsample_linear(&[2.0; 5], 12), vec![2.0; 12]);
        let up = upsample_linear(&[0.0, 1.0], 4);
        assert_eq!(up, vec![0.0, 0.25, 0.75, 1.0]);
    }
}
