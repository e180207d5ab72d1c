//! Central finite-difference checks at f64 for every differentiable
//! primitive, each layer, and the end-to-end model.

mod common;

use common::grads::{end_to_end_error, layer_errors, primitive_errors, END_TO_END_TOL, PRIMITIVE_TOL};

#[test]
fn primitives_match_finite_differences() {
    for (name, err) in primitive_errors() {
        assert!(err < PRIMITIVE_TOL, "{name}: {err}");
    }
}

#[test]
fn layers_match_finite_differences() {
    for (name, err) in layer_errors() {
        assert!(err < PRIMITIVE_TOL, "{name}: {err}");
    }
}

#[test]
fn end_to_end_model_on_parameter_sample() {
    let (err, checked) = end_to_end_error();
    assert!(checked >= 300, "only {checked} coordinates sampled");
    assert!(err < END_TO_END_TOL, "{err}");
}
