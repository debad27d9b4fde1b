//! Bounded evaluation parallelism.
//!
//! Read-only scoring work may fan out over threads; writes go to disjoint
//! output chunks so results are identical to a serial run. `CAMOE_THREADS`
//! caps the thread count (default: machine parallelism).

use std::sync::OnceLock;

pub fn max_threads() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        if let Ok(v) = std::env::var("CAMOE_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                return n.max(1);
            }
        }
        std::thread::available_parallelism().map_or(1, |n| n.get())
    })
}

/// Fill `out` by applying `f` to each index, chunked across threads.
/// Falls back to a serial loop for small workloads.
pub fn fill_indexed<T: Send>(out: &mut [T], min_chunk: usize, f: impl Fn(usize) -> T + Sync) {
    let n = out.len();
    let threads = max_threads().min(n / min_chunk.max(1)).max(1);
    if threads <= 1 {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
        return;
    }
    let chunk = n.div_ceil(threads);
    std::thread::scope(|scope| {
        for (c, slice) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                let base = c * chunk;
                for (k, slot) in slice.iter_mut().enumerate() {
                    *slot = f(base + k);
                }
            });
        }
    });
}
