//! The attention merge against a straight-line transcription of its
//! equations on random cases.

mod common;

use common::attention::attention_max_error;

#[test]
fn attention_matches_transcribed_equations() {
    let (err, bounded) = attention_max_error(77, 100);
    assert!(err < 1e-6, "max deviation {err}");
    assert!(bounded, "alpha left (0, 1)");
}
