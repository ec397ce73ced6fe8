//! Thread-count control for the data-parallel loops inside single ops.
//!
//! Parallel loops only split work over independent batch items and reduce
//! partial results in a fixed order, so results do not depend on the
//! thread count. Setting the count to 1 runs every loop inline.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

/// Environment variable read by [`init_from_env`].
pub const THREADS_ENV: &str = "DEQUANT_THREADS";

static THREADS: AtomicUsize = AtomicUsize::new(0);

/// Configures the worker count from `DEQUANT_THREADS` (unset means all cores).
pub fn init_from_env() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        set_threads(n);
    }
}

pub fn set_threads(n: usize) {
    let n = n.max(1);
    THREADS.store(n, Ordering::SeqCst);
    // The global pool can only be built once; later calls keep the first size
    // and fall back on the sequential switch below.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

pub fn is_sequential() -> bool {
    THREADS.load(Ordering::SeqCst) == 1
}

/// Maps `f` over `0..n`, in parallel unless sequential mode is active.
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    if n <= 1 || is_sequential() {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Applies `f` to every chunk of `data`, in parallel unless sequential.
pub fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    if data.len() <= chunk || is_sequential() {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    } else {
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}
