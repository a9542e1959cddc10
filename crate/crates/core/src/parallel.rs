//! Deterministic data parallelism.
//!
//! All parallel reductions in this crate run over chunks of a fixed size and
//! combine the per-chunk results in index order, so results are bitwise
//! identical for any thread count (including 1).

use std::sync::Once;

/// Fixed chunk length for deterministic parallel reductions.
pub const CHUNK: usize = 64;

static INIT: Once = Once::new();

/// Configures the global rayon pool from the `CONVEXDYN_THREADS` env var.
///
/// Unset or invalid values keep the default (all cores); `1` forces fully
/// sequential execution. Safe to call more than once; only the first call in
/// the process takes effect.
pub fn init_threads() {
    INIT.call_once(|| {
        if let Ok(v) = std::env::var("CONVEXDYN_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    // Ignore the error if a pool was already built elsewhere.
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}

/// Maps fixed-size chunks of `0..len` in parallel and folds the chunk results
/// in index order. `map` receives a chunk range and must be pure.
pub fn chunked_sum<T, M>(len: usize, map: M, zero: T, add: fn(T, T) -> T) -> T
where
    T: Send,
    M: Fn(std::ops::Range<usize>) -> T + Sync,
{
    use rayon::prelude::*;
    if len == 0 {
        return zero;
    }
    let n_chunks = len.div_ceil(CHUNK);
    let parts: Vec<T> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(len);
            map(lo..hi)
        })
        .collect();
    parts.into_iter().fold(zero, add)
}
