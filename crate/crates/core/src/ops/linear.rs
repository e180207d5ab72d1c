//! Fully-connected layer over flattened batch rows.

use crate::error::{Error, Result};
use crate::ops::instrument;
use crate::real::Real;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<T> {
    /// `[n_out][n_in]`
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
    pub n_in: usize,
    pub n_out: usize,
}

impl<T: Real> LinearParams<T> {
    pub fn new(n_in: usize, n_out: usize, bias: bool) -> Self {
        Self {
            weight: vec![T::zero(); n_in * n_out],
            bias: bias.then(|| vec![T::zero(); n_out]),
            n_in,
            n_out,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    fn check(&self, x: &Tensor3<T>) -> Result<()> {
        if self.weight.len() != self.n_in * self.n_out
            || self.bias.as_ref().is_some_and(|b| b.len() != self.n_out)
        {
            return Err(Error::shape(format!(
                "linear parameters inconsistent with [{}, {}]",
                self.n_out, self.n_in
            )));
        }
        if x.row_len() != self.n_in {
            return Err(Error::shape(format!(
                "linear input {:?} has {} features per row, weight is [{}, {}]",
                x.shape(),
                x.row_len(),
                self.n_out,
                self.n_in
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LinearGrads<T> {
    pub grad_x: Tensor3<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Option<Vec<T>>,
}

/// `y[b] = W x[b] + bias`, output shaped `[batch, n_out, 1]`.
pub fn fully_connected<T: Real>(x: &Tensor3<T>, p: &LinearParams<T>) -> Result<Tensor3<T>> {
    p.check(x)?;
    let counting = instrument::active();
    let mut out = Tensor3::zeros(x.batch(), p.n_out, 1);
    for b in 0..x.batch() {
        let xr = x.row(b);
        let yr = out.row_mut(b);
        for (o, y) in yr.iter_mut().enumerate() {
            let w = &p.weight[o * p.n_in..(o + 1) * p.n_in];
            let mut acc = T::zero();
            for (&wv, &xv) in w.iter().zip(xr) {
                acc += wv * xv;
            }
            if counting {
                instrument::add(2 * p.n_in as u64);
            }
            if let Some(bias) = &p.bias {
                acc += bias[o];
                if counting {
                    instrument::add(1);
                }
            }
            *y = acc;
        }
    }
    Ok(out)
}

pub fn fully_connected_backward<T: Real>(
    x: &Tensor3<T>,
    p: &LinearParams<T>,
    grad_out: &Tensor3<T>,
) -> Result<LinearGrads<T>> {
    p.check(x)?;
    if grad_out.batch() != x.batch() || grad_out.row_len() != p.n_out {
        return Err(Error::shape(format!(
            "linear grad_out {:?} for batch {} and {} outputs",
            grad_out.shape(),
            x.batch(),
            p.n_out
        )));
    }
    let mut grad_x = Tensor3::zeros(x.batch(), x.channels(), x.length());
    let mut grad_w = vec![T::zero(); p.weight.len()];
    let mut grad_b = p.bias.as_ref().map(|_| vec![T::zero(); p.n_out]);
    for b in 0..x.batch() {
        let xr = x.row(b);
        let gr = grad_out.row(b);
        let gx = grad_x.row_mut(b);
        for (o, &g) in gr.iter().enumerate() {
            if let Some(gb) = grad_b.as_mut() {
                gb[o] += g;
            }
            if g == T::zero() {
                continue;
            }
            let w = &p.weight[o * p.n_in..(o + 1) * p.n_in];
            let gw = &mut grad_w[o * p.n_in..(o + 1) * p.n_in];
            for i in 0..p.n_in {
                gw[i] += g * xr[i];
                gx[i] += g * w[i];
            }
        }
    }
    Ok(LinearGrads {
        grad_x,
        grad_weight: grad_w,
        grad_bias: grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_bias_only() {
        let x = Tensor3::from_rows(&[vec![1.0f64, -2.0, 3.0]]).unwrap();
        let mut p = LinearParams::<f64>::new(3, 3, true);
        for i in 0..3 {
            p.weight[i * 3 + i] = 1.0;
        }
        assert_eq!(fully_connected(&x, &p).unwrap().data(), x.data());

        let mut q = LinearParams::<f64>::new(3, 2, true);
        q.bias = Some(vec![0.5, -4.0]);
        assert_eq!(fully_connected(&x, &q).unwrap().data(), &[0.5, -4.0]);
    }

    #[test]
    fn rejects_mismatch() {
        let x = Tensor3::<f64>::zeros(2, 4, 1);
        let p = LinearParams::<f64>::new(3, 2, false);
        assert!(fully_connected(&x, &p).is_err());
    }

    #[test]
    fn flop_count_includes_bias() {
        let x = Tensor3::<f64>::zeros(1, 512, 1);
        let p = LinearParams::<f64>::new(512, 4, true);
        assert_eq!(p.param_count(), 2052);
        let (_, flops) = instrument::count_flops(|| fully_connected(&x, &p).unwrap());
        assert_eq!(flops, 4096 + 4);
    }
}
