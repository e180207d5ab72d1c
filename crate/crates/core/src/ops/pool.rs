use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor3;

/// Mean over the length axis; output length is 1.
pub fn global_avg_pool<T: Real>(x: &Tensor3<T>) -> Result<Tensor3<T>> {
    let (batch, channels, length) = x.shape();
    if length == 0 {
        return Err(Error::invalid("global average pool over an empty length"));
    }
    let inv = T::one() / T::lit(length as f64);
    let mut out = Tensor3::zeros(batch, channels, 1);
    for b in 0..batch {
        for c in 0..channels {
            out.set(b, c, 0, x.lane(b, c).iter().copied().sum::<T>() * inv);
        }
    }
    Ok(out)
}

/// Spreads `grad_out[b][c][0] / length` over every position.
pub fn global_avg_pool_backward<T: Real>(grad_out: &Tensor3<T>, length: usize) -> Tensor3<T> {
    let (batch, channels, _) = grad_out.shape();
    let inv = T::one() / T::lit(length as f64);
    let mut g = Tensor3::zeros(batch, channels, length);
    for b in 0..batch {
        for c in 0..channels {
            g.lane_mut(b, c).fill(grad_out.at(b, c, 0) * inv);
        }
    }
    g
}

/// Max pooling with implicit `-inf` padding. Returns the output and, per
/// output element, the input position that won. Ties go to the lowest index.
pub fn max_pool<T: Real>(
    x: &Tensor3<T>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<(Tensor3<T>, Vec<usize>)> {
    let (batch, channels, length) = x.shape();
    if kernel == 0 || stride == 0 || padding >= kernel {
        return Err(Error::invalid(format!(
            "max pool needs kernel, stride > 0 and padding < kernel (k={kernel}, s={stride}, p={padding})"
        )));
    }
    if length + 2 * padding < kernel {
        return Err(Error::invalid(format!(
            "max pool kernel {kernel} longer than padded input {length}"
        )));
    }
    let out_len = (length + 2 * padding - kernel) / stride + 1;
    let mut out = Tensor3::zeros(batch, channels, out_len);
    let mut argmax = vec![0usize; batch * channels * out_len];
    for b in 0..batch {
        for c in 0..channels {
            let src = x.lane(b, c);
            let base = (b * channels + c) * out_len;
            for t in 0..out_len {
                let lo = (t * stride).saturating_sub(padding);
                let hi = (t * stride + kernel - padding).min(length);
                let mut best = lo;
                for i in lo + 1..hi {
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                argmax[base + t] = best;
                out.set(b, c, t, src[best]);
            }
        }
    }
    Ok((out, argmax))
}

pub fn max_pool_backward<T: Real>(
    grad_out: &Tensor3<T>,
    argmax: &[usize],
    length: usize,
) -> Tensor3<T> {
    let (batch, channels, out_len) = grad_out.shape();
    let mut g = Tensor3::zeros(batch, channels, length);
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * out_len;
            let go = grad_out.lane(b, c);
            let gx = g.lane_mut(b, c);
            for t in 0..out_len {
                gx[argmax[base + t]] += go[t];
            }
        }
    }
    g
}
