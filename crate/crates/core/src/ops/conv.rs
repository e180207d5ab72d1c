//! Grouped 1-D convolution and the depthwise-separable composition.
//!
//! Layout:
//! * input `[batch, in_channels, length]`
//! * weight `[out_channels][in_channels / groups][kernel]`
//! * bias `[out_channels]` (optional)
//!
//! Padding is symmetric zeros. Each output element is accumulated as
//! `bias + sum_c sum_k w * x`, in ascending `c` then `k` order, so results
//! are reproducible against a plain nested-loop evaluation.

use crate::error::{Error, Result};
use crate::ops::instrument;
use crate::real::Real;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl<T: Real> ConvParams<T> {
    /// Zero-initialized parameters for the given geometry.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    ) -> Result<Self> {
        let p = Self {
            weight: vec![T::zero(); out_channels * (in_channels / groups.max(1)) * kernel],
            bias: bias.then(|| vec![T::zero(); out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
        };
        p.validate()?;
        Ok(p)
    }

    /// Per-channel filter with "same"-style padding `kernel / 2`.
    pub fn depthwise(channels: usize, kernel: usize, stride: usize) -> Result<Self> {
        Self::new(channels, channels, kernel, stride, kernel / 2, channels, false)
    }

    /// `1x1` channel mixing.
    pub fn pointwise(in_channels: usize, out_channels: usize, bias: bool) -> Result<Self> {
        Self::new(in_channels, out_channels, 1, 1, 0, 1, bias)
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.in_per_group() == 1
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(Error::invalid("groups, kernel and stride must be positive"));
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return Err(Error::invalid(format!(
                "groups={} must divide in_channels={} and out_channels={}",
                self.groups, self.in_channels, self.out_channels
            )));
        }
        let expected = self.out_channels * self.in_per_group() * self.kernel;
        if self.weight.len() != expected {
            return Err(Error::shape(format!(
                "conv weight holds {} values, geometry [{}, {}, {}] needs {expected}",
                self.weight.len(),
                self.out_channels,
                self.in_per_group(),
                self.kernel
            )));
        }
        if let Some(b) = &self.bias {
            if b.len() != self.out_channels {
                return Err(Error::shape(format!(
                    "conv bias holds {} values for {} output channels",
                    b.len(),
                    self.out_channels
                )));
            }
        }
        Ok(())
    }

    /// `floor((length + 2 * padding - kernel) / stride) + 1`, rejected if < 1.
    pub fn out_len(&self, length: usize) -> Result<usize> {
        let padded = length + 2 * self.padding;
        if padded < self.kernel {
            return Err(Error::invalid(format!(
                "input length {length} with padding {} is shorter than kernel {}",
                self.padding, self.kernel
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    fn check_input(&self, x: &Tensor3<T>) -> Result<usize> {
        self.validate()?;
        if x.channels() != self.in_channels {
            return Err(Error::shape(format!(
                "conv input {:?} has {} channels, weight [{}, {}, {}] with groups={} expects {}",
                x.shape(),
                x.channels(),
                self.out_channels,
                self.in_per_group(),
                self.kernel,
                self.groups,
                self.in_channels
            )));
        }
        self.out_len(x.length())
    }

    /// Valid output range `t` such that input index `t*stride + k - padding`
    /// falls inside `[0, length)`.
    #[inline]
    fn tap_range(&self, k: usize, length: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if k >= self.padding {
            0
        } else {
            (self.padding - k).div_ceil(s)
        };
        // t*s + k - pad <= length - 1
        let hi = if length + self.padding < k + 1 {
            0
        } else {
            ((length + self.padding - k - 1) / s + 1).min(out_len)
        };
        (lo.min(hi), hi)
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub grad_x: Tensor3<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Option<Vec<T>>,
}

pub fn conv1d_forward<T: Real>(x: &Tensor3<T>, p: &ConvParams<T>) -> Result<Tensor3<T>> {
    let out_len = p.check_input(x)?;
    if instrument::active() {
        return Ok(counted_forward(x, p, out_len));
    }
    let (batch, _, length) = x.shape();
    let ipg = p.in_per_group();
    let opg = p.out_per_group();
    let k_size = p.kernel;
    let s = p.stride;
    let mut out = Tensor3::zeros(batch, p.out_channels, out_len);
    let mut phases = Phases::new(p.in_channels, length, s);
    for b in 0..batch {
        if s > 1 {
            phases.split(x, b);
        }
        for o in 0..p.out_channels {
            let g = o / opg;
            let lane = out.lane_mut(b, o);
            if let Some(bias) = &p.bias {
                lane.fill(bias[o]);
            }
            for c in 0..ipg {
                let xs = x.lane(b, g * ipg + c);
                let w = &p.weight[(o * ipg + c) * k_size..(o * ipg + c + 1) * k_size];
                for (k, &wk) in w.iter().enumerate() {
                    let (t0, t1) = p.tap_range(k, length, out_len);
                    if t0 >= t1 {
                        continue;
                    }
                    let start = t0 * s + k - p.padding;
                    let src = if s == 1 {
                        &xs[start..start + (t1 - t0)]
                    } else {
                        phases.slice(g * ipg + c, start, t1 - t0)
                    };
                    for (d, &xv) in lane[t0..t1].iter_mut().zip(src) {
                        *d += wk * xv;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Plain loop over padded positions, tallying FLOPs as it goes.
fn counted_forward<T: Real>(x: &Tensor3<T>, p: &ConvParams<T>, out_len: usize) -> Tensor3<T> {
    let (batch, _, length) = x.shape();
    let ipg = p.in_per_group();
    let opg = p.out_per_group();
    let mut out = Tensor3::zeros(batch, p.out_channels, out_len);
    for b in 0..batch {
        for o in 0..p.out_channels {
            let g = o / opg;
            for t in 0..out_len {
                let mut acc = match &p.bias {
                    Some(bias) => {
                        instrument::add(1);
                        bias[o]
                    }
                    None => T::zero(),
                };
                for c in 0..ipg {
                    for k in 0..p.kernel {
                        instrument::add(2);
                        let pos = t * p.stride + k;
                        if pos < p.padding || pos - p.padding >= length {
                            continue;
                        }
                        acc += p.weight[(o * ipg + c) * p.kernel + k]
                            * x.at(b, g * ipg + c, pos - p.padding);
                    }
                }
                out.set(b, o, t, acc);
            }
        }
    }
    out
}

pub fn conv1d_backward<T: Real>(
    x: &Tensor3<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor3<T>,
) -> Result<ConvGrads<T>> {
    let out_len = p.check_input(x)?;
    let (batch, _, length) = x.shape();
    if grad_out.shape() != (batch, p.out_channels, out_len) {
        return Err(Error::shape(format!(
            "conv grad_out {:?} does not match forward output {:?}",
            grad_out.shape(),
            (batch, p.out_channels, out_len)
        )));
    }
    let ipg = p.in_per_group();
    let opg = p.out_per_group();
    let k_size = p.kernel;
    let s = p.stride;
    let mut grad_x = Tensor3::zeros(batch, p.in_channels, length);
    let mut grad_w = vec![T::zero(); p.weight.len()];
    let mut grad_b = p.bias.as_ref().map(|b| vec![T::zero(); b.len()]);

    let mut phases = Phases::new(p.in_channels, length, s);
    let mut grad_phases = Phases::new(p.in_channels, length, s);
    for b in 0..batch {
        if s > 1 {
            phases.split(x, b);
            grad_phases.data.fill(T::zero());
        }
        for o in 0..p.out_channels {
            let g = o / opg;
            let go = grad_out.lane(b, o);
            if let Some(gb) = grad_b.as_mut() {
                gb[o] += go.iter().copied().sum::<T>();
            }
            for c in 0..ipg {
                let ci = g * ipg + c;
                let widx = (o * ipg + c) * k_size;
                for k in 0..k_size {
                    let (t0, t1) = p.tap_range(k, length, out_len);
                    if t0 >= t1 {
                        continue;
                    }
                    let start = t0 * s + k - p.padding;
                    let wk = p.weight[widx + k];
                    let gos = &go[t0..t1];
                    let (xs, gx) = if s == 1 {
                        (
                            &x.lane(b, ci)[start..start + gos.len()],
                            &mut grad_x.lane_mut(b, ci)[start..start + gos.len()],
                        )
                    } else {
                        (
                            phases.slice(ci, start, gos.len()),
                            grad_phases.slice_mut(ci, start, gos.len()),
                        )
                    };
                    grad_w[widx + k] += dot(gos, xs);
                    for (d, &gv) in gx.iter_mut().zip(gos) {
                        *d += gv * wk;
                    }
                }
            }
        }
        if s > 1 {
            grad_phases.merge_into(&mut grad_x, b);
        }
    }
    Ok(ConvGrads {
        grad_x,
        grad_weight: grad_w,
        grad_bias: grad_b,
    })
}

/// A batch row's channels split into stride phases, so that the samples
/// a strided tap visits are contiguous: phase `r` of a channel holds
/// samples `r, r + s, r + 2s, ...`.
struct Phases<T> {
    data: Vec<T>,
    length: usize,
    stride: usize,
    phase_len: usize,
}

impl<T: Real> Phases<T> {
    fn new(channels: usize, length: usize, stride: usize) -> Self {
        let phase_len = length.div_ceil(stride);
        let size = if stride > 1 { channels * stride * phase_len } else { 0 };
        Self {
            data: vec![T::zero(); size],
            length,
            stride,
            phase_len,
        }
    }

    fn offset(&self, channel: usize, start: usize) -> usize {
        (channel * self.stride + start % self.stride) * self.phase_len + start / self.stride
    }

    fn split(&mut self, x: &Tensor3<T>, b: usize) {
        for c in 0..x.channels() {
            for (i, &v) in x.lane(b, c).iter().enumerate() {
                let at = self.offset(c, i);
                self.data[at] = v;
            }
        }
    }

    fn merge_into(&self, x: &mut Tensor3<T>, b: usize) {
        for c in 0..x.channels() {
            for i in 0..self.length {
                let at = self.offset(c, i);
                x.lane_mut(b, c)[i] += self.data[at];
            }
        }
    }

    /// Samples `start, start + s, ...` (`n` of them) of `channel`.
    fn slice(&self, channel: usize, start: usize, n: usize) -> &[T] {
        let at = self.offset(channel, start);
        &self.data[at..at + n]
    }

    fn slice_mut(&mut self, channel: usize, start: usize, n: usize) -> &mut [T] {
        let at = self.offset(channel, start);
        &mut self.data[at..at + n]
    }
}

/// Dot product over eight independent partial sums, which keeps the
/// reduction vectorizable.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let (a8, a_rest) = a.split_at(a.len() - a.len() % 8);
    let (b8, b_rest) = b.split_at(a8.len());
    for (ca, cb) in a8.chunks_exact(8).zip(b8.chunks_exact(8)) {
        for i in 0..8 {
            lanes[i] += ca[i] * cb[i];
        }
    }
    let mut acc = lanes.iter().copied().sum::<T>();
    for (&x, &y) in a_rest.iter().zip(b_rest) {
        acc += x * y;
    }
    acc
}

/// Depthwise convolution followed by a `1x1` pointwise convolution.
pub fn dsconv1d<T: Real>(
    x: &Tensor3<T>,
    depthwise: &ConvParams<T>,
    pointwise: &ConvParams<T>,
) -> Result<Tensor3<T>> {
    if depthwise.groups != x.channels() || depthwise.in_per_group() != 1 {
        return Err(Error::invalid(format!(
            "depthwise stage needs groups = input channels ({}), got groups={} with {} inputs per group",
            x.channels(),
            depthwise.groups,
            depthwise.in_per_group()
        )));
    }
    if pointwise.kernel != 1 || pointwise.groups != 1 {
        return Err(Error::invalid(format!(
            "pointwise stage needs kernel=1 and groups=1, got kernel={} groups={}",
            pointwise.kernel, pointwise.groups
        )));
    }
    let mid = conv1d_forward(x, depthwise)?;
    conv1d_forward(&mid, pointwise)
}

/// Weights of a depthwise-separable conv: `in*k + in*out`, plus biases.
pub fn dsconv_param_count(in_ch: usize, out_ch: usize, kernel: usize, bias: bool) -> usize {
    in_ch * kernel + in_ch * out_ch + if bias { out_ch } else { 0 }
}

/// Weights of a dense conv with the same receptive field.
pub fn dense_conv_param_count(in_ch: usize, out_ch: usize, kernel: usize, bias: bool) -> usize {
    in_ch * out_ch * kernel + if bias { out_ch } else { 0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(b: usize, c: usize, l: usize, v: &[f64]) -> Tensor3<f64> {
        Tensor3::from_vec(b, c, l, v.to_vec()).unwrap()
    }

    #[test]
    fn two_tap_example() {
        let x = t(1, 1, 3, &[1.0, 2.0, 3.0]);
        let mut p = ConvParams::<f64>::new(1, 1, 2, 1, 0, 1, false).unwrap();
        p.weight = vec![1.0, 1.0];
        let y = conv1d_forward(&x, &p).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);

        let g = conv1d_backward(&x, &p, &t(1, 1, 2, &[1.0, 1.0])).unwrap();
        assert_eq!(g.grad_weight, vec![3.0, 5.0]);
        assert_eq!(g.grad_x.data(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let x = Tensor3::<f64>::zeros(2, 3, 10);
        let mut p = ConvParams::<f64>::new(3, 4, 5, 2, 2, 1, true).unwrap();
        p.weight.iter_mut().enumerate().for_each(|(i, w)| *w = i as f64 * 0.1 - 1.0);
        let y = conv1d_forward(&x, &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernel_one_identity() {
        let x = t(1, 1, 4, &[0.5, -1.0, 2.0, 7.0]);
        let mut p = ConvParams::<f64>::pointwise(1, 1, true).unwrap();
        p.weight = vec![1.0];
        assert_eq!(conv1d_forward(&x, &p).unwrap().data(), x.data());
    }

    #[test]
    fn zero_upstream_gradient() {
        let x = t(1, 2, 5, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let mut p = ConvParams::<f64>::new(2, 2, 3, 1, 1, 2, true).unwrap();
        p.weight = vec![0.3, -0.2, 0.1, 0.7, 0.5, -0.4];
        let g = conv1d_backward(&x, &p, &Tensor3::zeros(1, 2, 5)).unwrap();
        assert!(g.grad_x.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_weight.iter().all(|&v| v == 0.0));
        assert!(g.grad_bias.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        let p = ConvParams::<f64>::new(2, 4, 3, 1, 0, 1, false).unwrap();
        let err = conv1d_forward(&Tensor3::zeros(1, 3, 8), &p).unwrap_err();
        assert!(err.to_string().contains("(1, 3, 8)"));
        assert!(conv1d_forward(&Tensor3::zeros(1, 2, 2), &p).is_err());
        assert!(ConvParams::<f64>::new(3, 4, 3, 1, 0, 2, false).is_err());
        let y = Tensor3::zeros(1, 4, 5);
        assert!(conv1d_backward(&Tensor3::zeros(1, 2, 8), &p, &y).is_err());
    }

    #[test]
    fn dsconv_counts() {
        assert_eq!(dense_conv_param_count(64, 64, 15, false), 61_440);
        assert_eq!(dsconv_param_count(64, 64, 15, false), 5_056);
    }

    #[test]
    fn dsconv_rejects_wrong_groups() {
        let x = Tensor3::<f64>::zeros(1, 4, 16);
        let dense = ConvParams::<f64>::new(4, 4, 3, 1, 1, 1, false).unwrap();
        let pw = ConvParams::<f64>::pointwise(4, 8, false).unwrap();
        assert!(dsconv1d(&x, &dense, &pw).is_err());
        let dw = ConvParams::<f64>::depthwise(4, 3, 1).unwrap();
        assert!(dsconv1d(&x, &dw, &dense).is_err());
        assert_eq!(dsconv1d(&x, &dw, &pw).unwrap().shape(), (1, 8, 16));
    }

    #[test]
    fn single_channel_dsconv_equals_plain_conv() {
        let x = t(1, 1, 6, &[1.0, -2.0, 0.5, 3.0, 1.5, -1.0]);
        let mut dw = ConvParams::<f64>::depthwise(1, 3, 1).unwrap();
        dw.weight = vec![0.2, -0.5, 1.0];
        let mut pw = ConvParams::<f64>::pointwise(1, 1, false).unwrap();
        pw.weight = vec![1.0];
        let mut plain = ConvParams::<f64>::new(1, 1, 3, 1, 1, 1, false).unwrap();
        plain.weight = dw.weight.clone();
        assert_eq!(
            dsconv1d(&x, &dw, &pw).unwrap(),
            conv1d_forward(&x, &plain).unwrap()
        );
    }

    #[test]
    fn counted_path_matches_fast_path() {
        let mut p = ConvParams::<f64>::new(4, 6, 5, 2, 2, 2, true).unwrap();
        for (i, w) in p.weight.iter_mut().enumerate() {
            *w = ((i * 37 % 11) as f64 - 5.0) * 0.1;
        }
        p.bias = Some(vec![0.1, -0.2, 0.3, 0.0, 1.0, 2.0]);
        let x = Tensor3::from_vec(2, 4, 9, (0..72).map(|v| (v as f64 * 0.37).sin()).collect())
            .unwrap();
        let fast = conv1d_forward(&x, &p).unwrap();
        let (counted, flops) = instrument::count_flops(|| conv1d_forward(&x, &p).unwrap());
        assert_eq!(fast, counted);
        // 2 * B * Cout * Lout * (Cin/g) * K + B * Lout * Cout
        assert_eq!(flops, (2 * 2 * 6 * 5 * 2 * 5 + 2 * 5 * 6) as u64);
    }
}
