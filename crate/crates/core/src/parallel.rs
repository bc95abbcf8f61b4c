//! Order-independent data parallelism for evaluation passes.
//!
//! Work is split into fixed-size chunks regardless of the thread count and
//! partial results are returned in chunk order, so a sequential fold over
//! them is bit-identical for any pool size.

use std::ops::Range;

use rayon::prelude::*;

pub const EVAL_CHUNK: usize = 1024;

/// Environment variable capping the number of evaluation threads.
pub const THREADS_ENV: &str = "VAE_LAB_THREADS";

pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync,
{
    let ranges: Vec<Range<usize>> = (0..n)
        .step_by(chunk.max(1))
        .map(|s| s..(s + chunk).min(n))
        .collect();
    ranges.into_par_iter().map(|r| f(r)).collect()
}

/// Configures the global pool from [`THREADS_ENV`] if it is set to a
/// positive integer. Returns the thread count in effect.
pub fn init_from_env() -> usize {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // Fails only if the pool was already built; keep whatever exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}
