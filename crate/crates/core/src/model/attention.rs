//! Lead-wise attention merge.
//!
//! Scores each lead's feature vector and fuses them:
//!
//! ```text
//! alpha    = sigmoid(FC2(Dropout(BN(FC1(concat[f1, f2, f3])))))   [B, 3]
//! f_merged = alpha_1 * f1 + alpha_2 * f2 + alpha_3 * f3           [B, D]
//! ```
//!
//! The scores are independent sigmoids; they are not normalized to sum to 1.

use crate::error::{Error, Result};
use crate::model::config::INPUT_LEADS;
use crate::model::layers::{BatchNorm, Linear};
use crate::model::params::{join, ParamMut, ParamRef, Parameterized};
use crate::ops::{dropout, dropout_backward, sigmoid};
use crate::real::Real;
use crate::rng::Stream;
use crate::tensor::Tensor3;
use crate::Mode;

#[derive(Debug, Clone)]
pub struct LeadAttention<T> {
    pub fc1: Linear<T>,
    pub bn: BatchNorm<T>,
    pub dropout_rate: f64,
    pub fc2: Linear<T>,
    cache: Option<AttentionCache<T>>,
}

#[derive(Debug, Clone)]
struct AttentionCache<T> {
    features: Vec<Tensor3<T>>,
    mask: Option<Vec<T>>,
    alpha: Tensor3<T>,
}

impl<T: Real> LeadAttention<T> {
    pub fn new(feature_dim: usize, hidden: usize, dropout_rate: f64, rng: &mut Stream) -> Self {
        Self {
            fc1: Linear::new(INPUT_LEADS * feature_dim, hidden, true, rng),
            bn: BatchNorm::new(hidden),
            dropout_rate,
            fc2: Linear::new(hidden, INPUT_LEADS, true, rng),
            cache: None,
        }
    }

    /// Returns `(f_merged [B, D, 1], alpha [B, 3, 1])`.
    pub fn forward(
        &mut self,
        features: &[Tensor3<T>],
        mode: Mode,
        rng: &mut Stream,
    ) -> Result<(Tensor3<T>, Tensor3<T>)> {
        if features.len() != INPUT_LEADS {
            return Err(Error::shape(format!(
                "attention merges {INPUT_LEADS} feature vectors, got {}",
                features.len()
            )));
        }
        let (batch, dim, one) = features[0].shape();
        if one != 1 || features.iter().any(|f| f.shape() != (batch, dim, 1)) {
            let shapes: Vec<_> = features.iter().map(Tensor3::shape).collect();
            return Err(Error::shape(format!(
                "attention inputs must all be [B, D, 1], got {shapes:?}"
            )));
        }
        let mut concat = Tensor3::zeros(batch, INPUT_LEADS * dim, 1);
        for b in 0..batch {
            let row = concat.row_mut(b);
            for (i, f) in features.iter().enumerate() {
                row[i * dim..(i + 1) * dim].copy_from_slice(f.row(b));
            }
        }
        let h = self.bn.forward(&self.fc1.forward(&concat)?, mode)?;
        let (h, mask) = dropout(&h, self.dropout_rate, mode, rng)?;
        let alpha = sigmoid(&self.fc2.forward(&h)?);

        let mut merged = Tensor3::zeros(batch, dim, 1);
        for b in 0..batch {
            let out = merged.row_mut(b);
            for (i, f) in features.iter().enumerate() {
                let a = alpha.at(b, i, 0);
                for (o, &v) in out.iter_mut().zip(f.row(b)) {
                    *o += a * v;
                }
            }
        }
        self.cache = Some(AttentionCache {
            features: features.to_vec(),
            mask,
            alpha: alpha.clone(),
        });
        Ok((merged, alpha))
    }

    /// Gradients with respect to each lead's features, through both the
    /// weighted sum and the scoring path.
    pub fn backward(&mut self, grad_merged: &Tensor3<T>) -> Result<Vec<Tensor3<T>>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid("attention: backward before forward"))?;
        let (batch, dim, _) = cache.features[0].shape();
        let mut grads: Vec<Tensor3<T>> = (0..INPUT_LEADS)
            .map(|_| Tensor3::zeros(batch, dim, 1))
            .collect();
        let mut grad_logit = Tensor3::zeros(batch, INPUT_LEADS, 1);
        for b in 0..batch {
            let g = grad_merged.row(b);
            for (i, f) in cache.features.iter().enumerate() {
                let a = cache.alpha.at(b, i, 0);
                let da: T = g.iter().zip(f.row(b)).map(|(&gv, &fv)| gv * fv).sum();
                grad_logit.set(b, i, 0, da * a * (T::one() - a));
                for (o, &gv) in grads[i].row_mut(b).iter_mut().zip(g) {
                    *o = a * gv;
                }
            }
        }
        let g = self.fc2.backward(&grad_logit)?;
        let g = dropout_backward(&g, cache.mask.as_deref());
        let g = self.bn.backward(&g)?;
        let g_concat = self.fc1.backward(&g)?;
        for b in 0..batch {
            let row = g_concat.row(b);
            for (i, gi) in grads.iter_mut().enumerate() {
                for (o, &v) in gi.row_mut(b).iter_mut().zip(&row[i * dim..(i + 1) * dim]) {
                    *o += v;
                }
            }
        }
        Ok(grads)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
        self.fc1.clear_cache();
        self.fc2.clear_cache();
        self.bn.clear_cache();
    }
}

impl<T: Real> Parameterized<T> for LeadAttention<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.bn.visit(&join(prefix, "bn"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_, T>)) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}
