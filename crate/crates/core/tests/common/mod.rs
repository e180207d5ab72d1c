//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod attention;
pub mod conv;
pub mod grads;

use leadwise::{Stream, Tensor3};

/// Standard-normal tensor.
pub fn randn(shape: (usize, usize, usize), rng: &mut Stream) -> Tensor3<f64> {
    let (b, c, l) = shape;
    Tensor3::from_vec(b, c, l, (0..b * c * l).map(|_| rng.normal()).collect()).unwrap()
}

/// `sum(r * y)`: a scalar loss whose gradient with respect to `y` is `r`.
pub fn probe_loss(y: &Tensor3<f64>, r: &Tensor3<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// A random subset of `ceil(n * fraction)` coordinates, sorted.
pub fn sample_coords(n: usize, fraction: f64, rng: &mut Stream) -> Vec<usize> {
    let want = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
    let mut all: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut all);
    all.truncate(want);
    all.sort_unstable();
    all
}
