//! Global rayon pool honoring the `SPECTRAFW_THREADS` cap.
//!
//! All internal parallelism uses fixed chunk boundaries and combines
//! partial results in index order, so results are bit-identical for
//! any thread count.

use once_cell::sync::OnceCell;

static POOL: OnceCell<()> = OnceCell::new();

/// Builds the global rayon pool once, capped by `SPECTRAFW_THREADS`
/// when the variable is set to a positive integer.
pub fn init() {
    POOL.get_or_init(|| {
        if let Ok(v) = std::env::var("SPECTRAFW_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    // Ignore failure: a pool may already exist (tests).
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    });
}

/// Row-chunk size used by all chunked reductions. Fixed so that the
/// summation order never depends on the number of worker threads.
pub const ROW_CHUNK: usize = 512;
