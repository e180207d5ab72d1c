//! Per-channel batch normalization over `(batch, length)`.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor3;
use crate::Mode;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    /// Strictly positive.
    pub running_var: Vec<T>,
    pub eps: T,
    /// `running = (1 - momentum) * running + momentum * batch`.
    pub momentum: T,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: T::lit(BN_EPS),
            momentum: T::lit(BN_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// What backward needs from the forward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mode: Mode,
}

pub fn batchnorm1d<T: Real>(
    x: &Tensor3<T>,
    s: &mut BatchNormState<T>,
    mode: Mode,
) -> Result<(Tensor3<T>, BnCache<T>)> {
    let (batch, channels, length) = x.shape();
    if channels != s.channels() {
        return Err(Error::shape(format!(
            "batchnorm over {} channels got input {:?}",
            s.channels(),
            x.shape()
        )));
    }
    let n = batch * length;
    let mut inv_std = vec![T::zero(); channels];
    let mut mean = vec![T::zero(); channels];
    match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::invalid(format!(
                    "batchnorm in train mode needs batch*length >= 2, got {n}"
                )));
            }
            let nf = T::lit(n as f64);
            for c in 0..channels {
                let mut sum = T::zero();
                for b in 0..batch {
                    sum += x.lane(b, c).iter().copied().sum::<T>();
                }
                let m = sum / nf;
                let mut sq = T::zero();
                for b in 0..batch {
                    for &v in x.lane(b, c) {
                        let d = v - m;
                        sq += d * d;
                    }
                }
                let var = sq / nf;
                mean[c] = m;
                inv_std[c] = T::one() / (var + s.eps).sqrt();
                let unbiased = sq / T::lit((n - 1) as f64);
                s.running_mean[c] = (T::one() - s.momentum) * s.running_mean[c] + s.momentum * m;
                s.running_var[c] =
                    (T::one() - s.momentum) * s.running_var[c] + s.momentum * unbiased;
            }
        }
        Mode::Eval => {
            for c in 0..channels {
                mean[c] = s.running_mean[c];
                inv_std[c] = T::one() / (s.running_var[c] + s.eps).sqrt();
            }
        }
    }
    let mut out = Tensor3::zeros(batch, channels, length);
    let mut xhat = vec![T::zero(); x.len()];
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * length;
            let (m, is, g, be) = (mean[c], inv_std[c], s.gamma[c], s.beta[c]);
            let src = x.lane(b, c);
            let dst = out.lane_mut(b, c);
            for l in 0..length {
                let h = (src[l] - m) * is;
                xhat[base + l] = h;
                dst[l] = g * h + be;
            }
        }
    }
    Ok((out, BnCache { xhat, inv_std, mode }))
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm1d_backward<T: Real>(
    grad_out: &Tensor3<T>,
    s: &BatchNormState<T>,
    cache: &BnCache<T>,
) -> Result<(Tensor3<T>, Vec<T>, Vec<T>)> {
    let (batch, channels, length) = grad_out.shape();
    if channels != s.channels() || cache.xhat.len() != grad_out.len() {
        return Err(Error::shape(format!(
            "batchnorm backward got grad {:?} for {} channels",
            grad_out.shape(),
            s.channels()
        )));
    }
    let mut ggamma = vec![T::zero(); channels];
    let mut gbeta = vec![T::zero(); channels];
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * length;
            for (l, &g) in grad_out.lane(b, c).iter().enumerate() {
                gbeta[c] += g;
                ggamma[c] += g * cache.xhat[base + l];
            }
        }
    }
    let mut grad_x = Tensor3::zeros(batch, channels, length);
    let nf = T::lit((batch * length) as f64);
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * length;
            let scale = s.gamma[c] * cache.inv_std[c];
            let go = grad_out.lane(b, c);
            let gx = grad_x.lane_mut(b, c);
            match cache.mode {
                Mode::Eval => {
                    for l in 0..length {
                        gx[l] = go[l] * scale;
                    }
                }
                Mode::Train => {
                    let mb = gbeta[c] / nf;
                    let mg = ggamma[c] / nf;
                    for l in 0..length {
                        gx[l] = scale * (go[l] - mb - cache.xhat[base + l] * mg);
                    }
                }
            }
        }
    }
    Ok((grad_x, ggamma, gbeta))
}
