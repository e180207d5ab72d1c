//! Adam with L2 weight decay folded into the gradient.

use crate::compress::PruneMask;
use crate::error::{Error, Result};
use crate::model::params::Parameterized;
use crate::real::Real;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments for every trainable tensor, in traversal order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new() -> Self {
        Self {
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update over every trainable parameter of
/// `model`, using the gradients currently stored in it.
///
/// `g <- g + weight_decay * theta` for conv and FC weights only. Entries
/// that `mask` marks as pruned are left untouched (and stay zero). A
/// non-finite gradient aborts before any parameter changes.
pub fn adam_step<T: Real, M: Parameterized<T> + ?Sized>(
    model: &mut M,
    state: &mut AdamState<T>,
    lr: f64,
    weight_decay: f64,
    mask: Option<&PruneMask>,
) -> Result<()> {
    let mut bad: Option<String> = None;
    model.visit_mut("", &mut |p| {
        if bad.is_none() {
            if let Some(g) = &p.grad {
                if g.iter().any(|v| !v.is_finite()) {
                    bad = Some(p.name.clone());
                }
            }
        }
    });
    if let Some(param) = bad {
        return Err(Error::NonFinite { param });
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
    let (c1, c2) = (T::lit(1.0 - BETA1), T::lit(1.0 - BETA2));
    let step = T::lit(lr / bc1);
    let inv_bc2 = T::lit(1.0 / bc2);
    let eps = T::lit(ADAM_EPS);
    let wd = T::lit(weight_decay);

    let mut slot = 0;
    let fresh = state.m.is_empty();
    model.visit_mut("", &mut |p| {
        let Some(grad) = p.grad else { return };
        if fresh {
            state.m.push(vec![T::zero(); grad.len()]);
            state.v.push(vec![T::zero(); grad.len()]);
        }
        let keep = mask.and_then(|m| m.keep(&p.name));
        let decay = p.kind.is_weight() && weight_decay != 0.0;
        let (m, v) = (&mut state.m[slot], &mut state.v[slot]);
        for i in 0..grad.len() {
            if keep.is_some_and(|k| !k[i]) {
                continue;
            }
            let mut g = grad[i];
            if decay {
                g += wd * p.value[i];
            }
            m[i] = b1 * m[i] + c1 * g;
            v[i] = b2 * v[i] + c2 * g * g;
            p.value[i] -= step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
        }
        slot += 1;
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{ParamKind, ParamMut, ParamRef};

    struct Scalar {
        w: Vec<f64>,
        g: Vec<f64>,
    }

    impl Parameterized<f64> for Scalar {
        fn visit(&self, _: &str, f: &mut dyn FnMut(ParamRef<'_, f64>)) {
            f(ParamRef {
                name: "w".into(),
                kind: ParamKind::FcWeight,
                shape: vec![self.w.len()],
                value: &self.w,
            });
        }
        fn visit_mut(&mut self, _: &str, f: &mut dyn FnMut(ParamMut<'_, f64>)) {
            let n = self.w.len();
            f(ParamMut {
                name: "w".into(),
                kind: ParamKind::FcWeight,
                shape: vec![n],
                value: &mut self.w,
                grad: Some(&mut self.g),
            });
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = Scalar { w: vec![0.0], g: vec![1.0] };
        let mut st = AdamState::new();
        adam_step(&mut s, &mut st, 1e-3, 0.0, None).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        assert!((s.w[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_no_decay_is_a_no_op() {
        let mut s = Scalar { w: vec![0.3, -2.0], g: vec![0.0, 0.0] };
        let mut st = AdamState::new();
        for _ in 0..3 {
            adam_step(&mut s, &mut st, 1e-2, 0.0, None).unwrap();
        }
        assert_eq!(s.w, vec![0.3, -2.0]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = Scalar { w: vec![1.0], g: vec![f64::NAN] };
        let err = adam_step(&mut s, &mut AdamState::new(), 1e-3, 0.0, None).unwrap_err();
        assert!(err.to_string().contains('w'));
        assert_eq!(s.w, vec![1.0]);
    }

    #[test]
    fn masked_entries_stay_put() {
        let mut s = Scalar { w: vec![0.0, 0.5], g: vec![1.0, 1.0] };
        let mask = PruneMask::from_pairs(vec![("w".to_string(), vec![false, true])]);
        let mut st = AdamState::new();
        adam_step(&mut s, &mut st, 1e-3, 1e-2, Some(&mask)).unwrap();
        assert_eq!(s.w[0], 0.0);
        assert!(s.w[1] < 0.5);
    }
}
