//! Process-wide worker pool, sized once from the `FISUM_THREADS` environment
//! variable.
//!
//! Parallel sections run inside [`pool`], so `FISUM_THREADS=1` forces fully
//! serial execution. All parallelism in this crate writes to disjoint output
//! regions or reduces in a fixed index order, so results are bit-identical
//! for every pool size; the variable only caps resource use.

use std::sync::OnceLock;

static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

/// Worker count: `FISUM_THREADS` when set to a positive integer, otherwise
/// the number of available CPUs.
pub fn worker_count() -> usize {
    match std::env::var("FISUM_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => default_workers(),
        },
        Err(_) => default_workers(),
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// The shared pool, built on first use.
pub fn pool() -> &'static rayon::ThreadPool {
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(worker_count())
            .build()
            .expect("worker pool construction")
    })
}
