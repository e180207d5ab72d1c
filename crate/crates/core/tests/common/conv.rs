//! Naive nested-loop references for `conv1d` and `dsconv1d` and the random
//! geometry sweeps that compare against them.

use super::randn;
use leadwise::ops::{conv1d_forward, dsconv1d, ConvParams};
use leadwise::{Stream, Tensor3};

/// Direct transcription of grouped 1D cross-correlation with zero padding.
pub fn naive_conv(x: &Tensor3<f64>, p: &ConvParams<f64>) -> Tensor3<f64> {
    let (batch, _, len) = x.shape();
    let out_len = (len + 2 * p.padding - p.kernel) / p.stride + 1;
    let ipg = p.in_channels / p.groups;
    let opg = p.out_channels / p.groups;
    let mut y = Tensor3::zeros(batch, p.out_channels, out_len);
    for b in 0..batch {
        for o in 0..p.out_channels {
            let g = o / opg;
            for t in 0..out_len {
                let mut acc = p.bias.as_ref().map_or(0.0, |bias| bias[o]);
                for c in 0..ipg {
                    for k in 0..p.kernel {
                        let pos = (t * p.stride + k) as isize - p.padding as isize;
                        if pos >= 0 && (pos as usize) < len {
                            acc += p.weight[(o * ipg + c) * p.kernel + k] * x.at(b, g * ipg + c, pos as usize);
                        }
                    }
                }
                y.set(b, o, t, acc);
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn random_params(rng: &mut Stream, c_in: usize, c_out: usize, k: usize, s: usize, pad: usize, groups: usize, bias: bool) -> ConvParams<f64> {
    let mut p = ConvParams::new(c_in, c_out, k, s, pad, groups, bias).unwrap();
    p.weight.iter_mut().for_each(|w| *w = rng.normal());
    if let Some(b) = p.bias.as_mut() {
        b.iter_mut().for_each(|v| *v = rng.normal());
    }
    p
}

/// Compares `conv1d_forward` with the reference on `cases` random
/// geometries (groups, stride, padding, bias all varied). Returns the
/// indices of cases that differ in any bit.
pub fn conv1d_mismatches(seed: u64, cases: usize) -> Vec<usize> {
    let mut rng = Stream::new(seed);
    let mut bad = Vec::new();
    for case in 0..cases {
        let groups = 1 + rng.below(3);
        let c_in = groups * (1 + rng.below(3));
        let c_out = groups * (1 + rng.below(3));
        let k = 1 + rng.below(7);
        let s = 1 + rng.below(3);
        let pad = rng.below(k);
        let len = k + rng.below(30);
        let bias = rng.bernoulli(0.5);
        let p = random_params(&mut rng, c_in, c_out, k, s, pad, groups, bias);
        let x = randn((1 + rng.below(3), c_in, len), &mut rng);
        if conv1d_forward(&x, &p).unwrap() != naive_conv(&x, &p) {
            bad.push(case);
        }
    }
    bad
}

/// Same for the depthwise-separable composition.
pub fn dsconv1d_mismatches(seed: u64, cases: usize) -> Vec<usize> {
    let mut rng = Stream::new(seed);
    let mut bad = Vec::new();
    for case in 0..cases {
        let c_in = 1 + rng.below(5);
        let c_out = 1 + rng.below(6);
        let k = 1 + 2 * rng.below(4);
        let s = 1 + rng.below(3);
        let len = k + rng.below(40);
        let dw = random_params(&mut rng, c_in, c_in, k, s, k / 2, c_in, false);
        let pw = random_params(&mut rng, c_in, c_out, 1, 1, 0, 1, false);
        let x = randn((1 + rng.below(3), c_in, len), &mut rng);
        if dsconv1d(&x, &dw, &pw).unwrap() != naive_conv(&naive_conv(&x, &dw), &pw) {
            bad.push(case);
        }
    }
    bad
}
