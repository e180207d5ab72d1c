//! DropLead: zero one randomly chosen input lead per record during training.

use crate::model::config::INPUT_LEADS;
use crate::real::Real;
use crate::rng::Stream;
use crate::tensor::Tensor3;
use crate::Mode;

/// With probability `p` per batch row, zeroes one lead picked uniformly
/// from the three. Eval mode returns the input unchanged. Also returns
/// which lead, if any, was dropped in each row.
pub fn drop_lead<T: Real>(
    x: &Tensor3<T>,
    p: f64,
    rng: &mut Stream,
    mode: Mode,
) -> (Tensor3<T>, Vec<Option<usize>>) {
    let mut out = x.clone();
    let mut dropped = vec![None; x.batch()];
    if mode == Mode::Eval || p == 0.0 {
        return (out, dropped);
    }
    debug_assert_eq!(x.channels(), INPUT_LEADS, "DropLead expects three leads");
    for (b, slot) in dropped.iter_mut().enumerate() {
        if rng.bernoulli(p) {
            let lead = rng.below(x.channels());
            out.lane_mut(b, lead).fill(T::zero());
            *slot = Some(lead);
        }
    }
    (out, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_disabled() {
        let x = Tensor3::<f32>::filled(4, 3, 5, 1.5);
        let mut rng = Stream::new(1);
        assert_eq!(drop_lead(&x, 0.0, &mut rng, Mode::Train).0, x);
        assert_eq!(drop_lead(&x, 1.0, &mut rng, Mode::Eval).0, x);
    }

    #[test]
    fn at_most_one_lead_per_row() {
        let x = Tensor3::<f32>::filled(200, 3, 4, 1.0);
        let (y, dropped) = drop_lead(&x, 1.0, &mut Stream::new(2), Mode::Train);
        for b in 0..200 {
            let zeroed: Vec<usize> = (0..3).filter(|&c| y.lane(b, c).iter().all(|&v| v == 0.0)).collect();
            assert_eq!(zeroed, vec![dropped[b].unwrap()]);
        }
    }
}
