use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{Error, Result};

/// Dedicated pool so `--threads` never leaks into the global rayon pool.
pub fn thread_pool(threads: usize) -> Result<ThreadPool> {
    if threads == 0 {
        return Err(Error::Usage("thread count must be >= 1".into()));
    }
    ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {threads} threads: {e}")))
}
