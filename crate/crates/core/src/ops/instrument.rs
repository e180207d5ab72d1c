//! Opt-in FLOP counting.
//!
//! While [`count_flops`] runs its closure, convolution and fully-connected
//! forwards switch to a plain loop that tallies every multiply-accumulate
//! (two FLOPs, padded taps included) and every bias add. The tally is
//! thread-local; other threads are unaffected.

use std::cell::Cell;

thread_local! {
    static FLOPS: Cell<Option<u64>> = const { Cell::new(None) };
}

/// Runs `f` with counting enabled and returns its result with the FLOP tally.
pub fn count_flops<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let previous = FLOPS.with(|c| c.replace(Some(0)));
    let out = f();
    let counted = FLOPS.with(|c| c.replace(previous)).unwrap_or(0);
    (out, counted)
}

#[inline]
pub(crate) fn active() -> bool {
    FLOPS.with(|c| c.get().is_some())
}

#[inline]
pub(crate) fn add(n: u64) {
    FLOPS.with(|c| {
        if let Some(v) = c.get() {
            c.set(Some(v + n));
        }
    });
}
