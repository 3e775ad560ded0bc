//! Pluggable fan-out for independent work items.
//!
//! The core has no threads. Callers that have them (the `cvae` binary with
//! `--threads > 0`) provide an [`Executor`] whose `map` may run jobs
//! concurrently; results always come back in job order, so any reduction
//! done over them is order-fixed.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Number of chunks work should be divided into. `1` means the
    /// sequential reference path.
    fn parallelism(&self) -> usize;

    /// Runs `f(0..n)` and returns the results in index order.
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Single-threaded, deterministic reference executor.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn parallelism(&self) -> usize {
        1
    }

    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Splits `0..len` into at most `parts` contiguous, nearly equal ranges.
pub fn chunk_ranges(len: usize, parts: usize) -> Vec<core::ops::Range<usize>> {
    let parts = parts.max(1).min(len.max(1));
    let base = len / parts;
    let extra = len % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let size = base + usize::from(i < extra);
        out.push(start..start + size);
        start += size;
    }
    out
}
