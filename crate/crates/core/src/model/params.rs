//! Named parameter traversal.
//!
//! Layers expose their tensors through [`Parameterized`], which walks them
//! in a fixed order with dotted names (`backbone0.stage1.block0.conv1.pw.weight`).
//! Optimizers, pruning and checkpoints all work off this walk.

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    ConvWeight,
    FcWeight,
    Bias,
    BnGamma,
    BnBeta,
    BnRunningMean,
    BnRunningVar,
}

impl ParamKind {
    /// Updated by the optimizer (running statistics are not).
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::BnRunningMean | ParamKind::BnRunningVar)
    }

    /// Conv and FC weights: the tensors that receive weight decay and are
    /// eligible for pruning.
    pub fn is_weight(self) -> bool {
        matches!(self, ParamKind::ConvWeight | ParamKind::FcWeight)
    }

    pub fn code(self) -> u8 {
        match self {
            ParamKind::ConvWeight => 0,
            ParamKind::FcWeight => 1,
            ParamKind::Bias => 2,
            ParamKind::BnGamma => 3,
            ParamKind::BnBeta => 4,
            ParamKind::BnRunningMean => 5,
            ParamKind::BnRunningVar => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ParamKind::ConvWeight,
            1 => ParamKind::FcWeight,
            2 => ParamKind::Bias,
            3 => ParamKind::BnGamma,
            4 => ParamKind::BnBeta,
            5 => ParamKind::BnRunningMean,
            6 => ParamKind::BnRunningVar,
            _ => return None,
        })
    }
}

pub struct ParamRef<'a, T> {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub value: &'a [T],
}

pub struct ParamMut<'a, T> {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub value: &'a mut [T],
    /// Absent for running statistics.
    pub grad: Option<&'a mut [T]>,
}

pub trait Parameterized<T: Real> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_, T>));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |p| {
            if let Some(g) = p.grad {
                g.fill(T::zero());
            }
        });
    }

    /// Scalar count over trainable tensors.
    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |p| {
            if p.kind.trainable() {
                n += p.value.len();
            }
        });
        n
    }

    /// Trainable values concatenated in traversal order.
    fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.visit("", &mut |p| {
            if p.kind.trainable() {
                out.extend_from_slice(p.value);
            }
        });
        out
    }

    fn flat_grads(&mut self) -> Vec<T> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |p| {
            if let Some(g) = p.grad {
                out.extend_from_slice(g);
            }
        });
        out
    }

    fn set_flat_params(&mut self, flat: &[T]) {
        let mut offset = 0;
        self.visit_mut("", &mut |p| {
            if p.kind.trainable() {
                let n = p.value.len();
                p.value.copy_from_slice(&flat[offset..offset + n]);
                offset += n;
            }
        });
        assert_eq!(offset, flat.len(), "flat parameter vector length mismatch");
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
