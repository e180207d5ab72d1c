use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::Stream;
use crate::tensor::Tensor3;
use crate::Mode;

/// Inverted dropout. Returns the output and the per-element multiplier
/// (`0` or `1/(1-rate)`) for backward; eval mode and `rate == 0` return the
/// input unchanged with no multiplier.
pub fn dropout<T: Real>(
    x: &Tensor3<T>,
    rate: f64,
    mode: Mode,
    rng: &mut Stream,
) -> Result<(Tensor3<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        let mut y = x.clone();
        y.grad = None;
        return Ok((y, None));
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.bernoulli(rate) { T::zero() } else { keep })
        .collect();
    let mut y = x.clone();
    y.grad = None;
    for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((y, Some(mask)))
}

pub fn dropout_backward<T: Real>(grad_out: &Tensor3<T>, mask: Option<&[T]>) -> Tensor3<T> {
    let mut g = grad_out.clone();
    g.grad = None;
    if let Some(m) = mask {
        for (v, &k) in g.data_mut().iter_mut().zip(m) {
            *v *= k;
        }
    }
    g
}
