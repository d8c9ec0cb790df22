//! Replica fan-out. Replica `i` always receives `replica_seed(master, i)` and
//! results come back in index order, so output does not depend on the
//! number of worker threads.

use rayon::prelude::*;

use crate::engine::replica_seed;
use crate::error::{Error, Result};

/// Runs `f(i, seed_i)` for `i in 0..n` on `workers` threads (0 = rayon's
/// default) and returns the results in index order. The first error by
/// index wins.
pub fn run_replicas<T, F>(n: usize, master: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync + Send,
{
    let job = || {
        (0..n)
            .into_par_iter()
            .map(|i| f(i, replica_seed(master, i as u64)))
            .collect::<Vec<_>>()
    };
    let results = if workers == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(job)
    };
    results.into_iter().collect()
}
