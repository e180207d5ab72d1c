//! Stateful wrappers around [`crate::ops`]: each layer owns its parameters,
//! their gradient buffers and whatever the backward pass needs from the last
//! forward call.

use crate::error::{Error, Result};
use crate::model::params::{join, ParamKind, ParamMut, ParamRef, Parameterized};
use crate::ops::{
    batchnorm1d, batchnorm1d_backward, conv1d_backward, conv1d_forward, fully_connected,
    fully_connected_backward, BatchNormState, BnCache, ConvParams, LinearParams,
};
use crate::real::Real;
use crate::rng::Stream;
use crate::tensor::Tensor3;
use crate::Mode;

/// Kaiming-uniform draw with negative slope `sqrt(5)`, the common framework
/// default for conv and linear layers: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub(crate) fn kaiming_uniform<T: Real>(values: &mut [T], fan_in: usize, rng: &mut Stream) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in values {
        *v = T::lit(rng.uniform_range(-bound, bound));
    }
}

/// Bias draw: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub(crate) fn bias_uniform<T: Real>(values: &mut [T], fan_in: usize, rng: &mut Stream) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in values {
        *v = T::lit(rng.uniform_range(-bound, bound));
    }
}

fn missing_cache(layer: &str) -> Error {
    Error::invalid(format!("{layer}: backward called before forward"))
}

#[derive(Debug, Clone)]
pub struct Conv<T> {
    pub params: ConvParams<T>,
    grad_weight: Vec<T>,
    grad_bias: Option<Vec<T>>,
    input: Option<Tensor3<T>>,
}

impl<T: Real> Conv<T> {
    pub fn new(params: ConvParams<T>, rng: &mut Stream) -> Self {
        let mut params = params;
        let fan_in = params.in_per_group() * params.kernel;
        kaiming_uniform(&mut params.weight, fan_in, rng);
        if let Some(b) = params.bias.as_mut() {
            bias_uniform(b, fan_in, rng);
        }
        Self {
            grad_weight: vec![T::zero(); params.weight.len()],
            grad_bias: params.bias.as_ref().map(|b| vec![T::zero(); b.len()]),
            params,
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        let y = conv1d_forward(x, &self.params)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor3<T>) -> Result<Tensor3<T>> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("conv"))?;
        let g = conv1d_backward(x, &self.params, grad_out)?;
        accumulate(&mut self.grad_weight, &g.grad_weight);
        if let (Some(acc), Some(gb)) = (self.grad_bias.as_mut(), g.grad_bias.as_ref()) {
            accumulate(acc, gb);
        }
        Ok(g.grad_x)
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}

impl<T: Real> Parameterized<T> for Conv<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        let p = &self.params;
        f(ParamRef {
            name: join(prefix, "weight"),
            kind: ParamKind::ConvWeight,
            shape: vec![p.out_channels, p.in_per_group(), p.kernel],
            value: &p.weight,
        });
        if let Some(b) = &p.bias {
            f(ParamRef {
                name: join(prefix, "bias"),
                kind: ParamKind::Bias,
                shape: vec![b.len()],
                value: b,
            });
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_, T>)) {
        let shape = vec![
            self.params.out_channels,
            self.params.in_per_group(),
            self.params.kernel,
        ];
        f(ParamMut {
            name: join(prefix, "weight"),
            kind: ParamKind::ConvWeight,
            shape,
            value: &mut self.params.weight,
            grad: Some(&mut self.grad_weight),
        });
        if let (Some(b), Some(gb)) = (self.params.bias.as_mut(), self.grad_bias.as_mut()) {
            f(ParamMut {
                name: join(prefix, "bias"),
                kind: ParamKind::Bias,
                shape: vec![b.len()],
                value: b,
                grad: Some(gb),
            });
        }
    }
}

/// Depthwise conv (carrying the stride) followed by a pointwise conv.
#[derive(Debug, Clone)]
pub struct DsConv<T> {
    pub depthwise: Conv<T>,
    pub pointwise: Conv<T>,
}

impl<T: Real> DsConv<T> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        rng: &mut Stream,
    ) -> Result<Self> {
        Ok(Self {
            depthwise: Conv::new(ConvParams::depthwise(in_ch, kernel, stride)?, rng),
            pointwise: Conv::new(ConvParams::pointwise(in_ch, out_ch, false)?, rng),
        })
    }

    pub fn forward(&mut self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        let mid = self.depthwise.forward(x)?;
        self.pointwise.forward(&mid)
    }

    pub fn backward(&mut self, grad_out: &Tensor3<T>) -> Result<Tensor3<T>> {
        let g = self.pointwise.backward(grad_out)?;
        self.depthwise.backward(&g)
    }

    pub fn clear_cache(&mut self) {
        self.depthwise.clear_cache();
        self.pointwise.clear_cache();
    }
}

impl<T: Real> Parameterized<T> for DsConv<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        self.depthwise.visit(&join(prefix, "dw"), f);
        self.pointwise.visit(&join(prefix, "pw"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_, T>)) {
        self.depthwise.visit_mut(&join(prefix, "dw"), f);
        self.pointwise.visit_mut(&join(prefix, "pw"), f);
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub state: BatchNormState<T>,
    grad_gamma: Vec<T>,
    grad_beta: Vec<T>,
    cache: Option<BnCache<T>>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            state: BatchNormState::new(channels),
            grad_gamma: vec![T::zero(); channels],
            grad_beta: vec![T::zero(); channels],
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor3<T>, mode: Mode) -> Result<Tensor3<T>> {
        let (y, cache) = batchnorm1d(x, &mut self.state, mode)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor3<T>) -> Result<Tensor3<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("batchnorm"))?;
        let (gx, gg, gb) = batchnorm1d_backward(grad_out, &self.state, cache)?;
        accumulate(&mut self.grad_gamma, &gg);
        accumulate(&mut self.grad_beta, &gb);
        Ok(gx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl<T: Real> Parameterized<T> for BatchNorm<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        let c = self.state.channels();
        let s = &self.state;
        for (name, kind, value) in [
            ("gamma", ParamKind::BnGamma, &s.gamma),
            ("beta", ParamKind::BnBeta, &s.beta),
            ("running_mean", ParamKind::BnRunningMean, &s.running_mean),
            ("running_var", ParamKind::BnRunningVar, &s.running_var),
        ] {
            f(ParamRef {
                name: join(prefix, name),
                kind,
                shape: vec![c],
                value,
            });
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_, T>)) {
        let c = self.state.channels();
        let s = &mut self.state;
        f(ParamMut {
            name: join(prefix, "gamma"),
            kind: ParamKind::BnGamma,
            shape: vec![c],
            value: &mut s.gamma,
            grad: Some(&mut self.grad_gamma),
        });
        f(ParamMut {
            name: join(prefix, "beta"),
            kind: ParamKind::BnBeta,
            shape: vec![c],
            value: &mut s.beta,
            grad: Some(&mut self.grad_beta),
        });
        f(ParamMut {
            name: join(prefix, "running_mean"),
            kind: ParamKind::BnRunningMean,
            shape: vec![c],
            value: &mut s.running_mean,
            grad: None,
        });
        f(ParamMut {
            name: join(prefix, "running_var"),
            kind: ParamKind::BnRunningVar,
            shape: vec![c],
            value: &mut s.running_var,
            grad: None,
        });
    }
}

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub params: LinearParams<T>,
    grad_weight: Vec<T>,
    grad_bias: Option<Vec<T>>,
    input: Option<Tensor3<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(n_in: usize, n_out: usize, bias: bool, rng: &mut Stream) -> Self {
        let mut params = LinearParams::new(n_in, n_out, bias);
        kaiming_uniform(&mut params.weight, n_in, rng);
        if let Some(b) = params.bias.as_mut() {
            bias_uniform(b, n_in, rng);
        }
        Self {
            grad_weight: vec![T::zero(); params.weight.len()],
            grad_bias: params.bias.as_ref().map(|b| vec![T::zero(); b.len()]),
            params,
            input: None,
        }
    }

    /// Fresh draw of weights and bias from the initializer distribution.
    pub fn reinitialize(&mut self, rng: &mut Stream) {
        let n_in = self.params.n_in;
        kaiming_uniform(&mut self.params.weight, n_in, rng);
        if let Some(b) = self.params.bias.as_mut() {
            bias_uniform(b, n_in, rng);
        }
    }

    pub fn forward(&mut self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        let y = fully_connected(x, &self.params)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor3<T>) -> Result<Tensor3<T>> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("linear"))?;
        let g = fully_connected_backward(x, &self.params, grad_out)?;
        accumulate(&mut self.grad_weight, &g.grad_weight);
        if let (Some(acc), Some(gb)) = (self.grad_bias.as_mut(), g.grad_bias.as_ref()) {
            accumulate(acc, gb);
        }
        Ok(g.grad_x)
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}

impl<T: Real> Parameterized<T> for Linear<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        let p = &self.params;
        f(ParamRef {
            name: join(prefix, "weight"),
            kind: ParamKind::FcWeight,
            shape: vec![p.n_out, p.n_in],
            value: &p.weight,
        });
        if let Some(b) = &p.bias {
            f(ParamRef {
                name: join(prefix, "bias"),
                kind: ParamKind::Bias,
                shape: vec![b.len()],
                value: b,
            });
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_, T>)) {
        let shape = vec![self.params.n_out, self.params.n_in];
        f(ParamMut {
            name: join(prefix, "weight"),
            kind: ParamKind::FcWeight,
            shape,
            value: &mut self.params.weight,
            grad: Some(&mut self.grad_weight),
        });
        if let (Some(b), Some(gb)) = (self.params.bias.as_mut(), self.grad_bias.as_mut()) {
            f(ParamMut {
                name: join(prefix, "bias"),
                kind: ParamKind::Bias,
                shape: vec![b.len()],
                value: b,
                grad: Some(gb),
            });
        }
    }
}

#[inline]
pub(crate) fn accumulate<T: Real>(acc: &mut [T], g: &[T]) {
    for (a, &v) in acc.iter_mut().zip(g) {
        *a += v;
    }
}

pub(crate) fn add_into<T: Real>(acc: &mut Tensor3<T>, g: &Tensor3<T>) {
    accumulate(acc.data_mut(), g.data());
}
