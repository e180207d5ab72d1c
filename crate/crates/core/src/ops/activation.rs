use crate::real::Real;
use crate::tensor::Tensor3;

pub fn relu<T: Real>(x: &Tensor3<T>) -> Tensor3<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Routes gradient through positions where the forward input was positive.
pub fn relu_backward<T: Real>(x: &Tensor3<T>, grad_out: &Tensor3<T>) -> Tensor3<T> {
    let mut g = grad_out.clone();
    g.grad = None;
    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
        if xv <= T::zero() {
            *gv = T::zero();
        }
    }
    g
}

/// Logistic function, clamped so the result stays strictly inside `(0, 1)`
/// even where the exact value rounds to an endpoint.
#[inline]
pub fn sigmoid_scalar<T: Real>(v: T) -> T {
    let y = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    let top = T::one() - T::epsilon() / T::lit(2.0);
    y.max(T::min_positive_value()).min(top)
}

pub fn sigmoid<T: Real>(x: &Tensor3<T>) -> Tensor3<T> {
    x.map(sigmoid_scalar)
}

/// Takes the forward *output* `y = sigmoid(x)`.
pub fn sigmoid_backward<T: Real>(y: &Tensor3<T>, grad_out: &Tensor3<T>) -> Tensor3<T> {
    let mut g = grad_out.clone();
    g.grad = None;
    for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
        *gv *= yv * (T::one() - yv);
    }
    g
}

/// Softmax over each batch row (all `channels * length` values of the row).
pub fn softmax_rows<T: Real>(x: &Tensor3<T>) -> Tensor3<T> {
    let mut out = x.clone();
    out.grad = None;
    for b in 0..x.batch() {
        softmax_in_place(out.row_mut(b));
    }
    out
}

pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Backward of row softmax given its output `y`.
pub fn softmax_backward<T: Real>(y: &Tensor3<T>, grad_out: &Tensor3<T>) -> Tensor3<T> {
    let mut g = Tensor3::zeros(y.batch(), y.channels(), y.length());
    for b in 0..y.batch() {
        let yr = y.row(b);
        let gr = grad_out.row(b);
        let dot: T = yr.iter().zip(gr).map(|(&a, &c)| a * c).sum();
        for ((o, &yv), &gv) in g.row_mut(b).iter_mut().zip(yr).zip(gr) {
            *o = yv * (gv - dot);
        }
    }
    g
}
