//! Execution policy for the data-parallel kernels.
//!
//! Every helper here splits work into fixed-size chunks whose boundaries do
//! not depend on the thread count, and merges chunk results in chunk order.
//! Floating-point reductions therefore give the same bits whether they run
//! on rayon or on the calling thread.

use std::cell::Cell;
use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used by reductions over flat arrays.
pub const REDUCE_CHUNK: usize = 4096;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with all kernels invoked from this thread on the sequential path.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            FORCE_SEQUENTIAL.with(|c| c.set(self.0));
        }
    }
    let _restore = Restore(FORCE_SEQUENTIAL.with(|c| c.replace(true)));
    f()
}

/// Whether kernels called from this thread will use rayon.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Calls `f(chunk_index, chunk)` for every `chunk_len` slice of `out`.
pub(crate) fn fill_chunks<T, F>(out: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        out.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    out.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Maps each index range `[k·chunk_len, (k+1)·chunk_len) ∩ [0, len)` and
/// returns results in chunk order.
pub(crate) fn map_chunks<R, F>(len: usize, chunk_len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    let n_chunks = len.div_ceil(chunk_len);
    let range = move |k: usize| k * chunk_len..((k + 1) * chunk_len).min(len);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..n_chunks).into_par_iter().map(|k| f(range(k))).collect();
    }
    (0..n_chunks).map(|k| f(range(k))).collect()
}

/// Element-wise map over `0..len`, order preserved.
pub(crate) fn map_indices<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..len).into_par_iter().map(f).collect();
    }
    (0..len).map(f).collect()
}

/// Deterministic sum of `f(i)` for `i` in `0..len`.
pub(crate) fn sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_chunks(len, REDUCE_CHUNK, |r| r.map(&f).sum::<f64>())
        .into_iter()
        .sum()
}
