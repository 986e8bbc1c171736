//! Batch fan-out with a deterministic, order-preserving reduction.

use std::ops::Range;

use crate::error::Result;

/// How path batches are scheduled. Results do not depend on the choice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Work-stealing over batches; `threads` caps the workers. Falls back to
    /// sequential when built without the `parallel` feature.
    #[default]
    Parallel,
    ParallelWith { threads: usize },
}

/// Default number of paths per batch.
pub const BATCH: usize = 512;

fn batches(n: usize, batch: usize) -> Vec<Range<u64>> {
    let batch = batch.max(1);
    (0..n.div_ceil(batch)).map(|b| (b * batch) as u64..((b + 1) * batch).min(n) as u64).collect()
}

/// Runs `f` on consecutive ranges of path indices and returns the results in
/// range order.
pub fn map_batches<T, F>(n_paths: usize, batch: usize, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<u64>) -> Result<T> + Sync + Send,
{
    let ranges = batches(n_paths, batch);
    match exec {
        Execution::Sequential => ranges.into_iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            ranges.into_par_iter().map(f).collect()
        }
        #[cfg(feature = "parallel")]
        Execution::ParallelWith { threads } => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| crate::Error::Input(format!("thread pool: {e}")))?;
            pool.install(|| ranges.into_par_iter().map(f).collect())
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel | Execution::ParallelWith { .. } => ranges.into_iter().map(f).collect(),
    }
}
