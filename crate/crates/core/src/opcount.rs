//! Thread-local arithmetic-operation counter.
//!
//! Every numeric kernel records the number of arithmetic operations it
//! performs (multiply-accumulates count as 2). Pure data movement — temporal
//! shifting, cache swaps, layout folding — records nothing, which is what
//! lets tests observe the zero-computation property of the shift operation.

use std::cell::Cell;

thread_local! {
    static ARITH_OPS: Cell<u64> = const { Cell::new(0) };
}

/// Reset the current thread's counter to zero.
pub fn reset() {
    ARITH_OPS.with(|c| c.set(0));
}

/// Arithmetic operations recorded on the current thread since the last reset.
pub fn current() -> u64 {
    ARITH_OPS.with(|c| c.get())
}

pub(crate) fn record(ops: u64) {
    ARITH_OPS.with(|c| c.set(c.get().wrapping_add(ops)));
}
