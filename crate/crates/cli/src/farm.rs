//! Replicate farming: an ordered parallel map over replicate indices.
//!
//! Every replicate derives its randomness from the master seed and its own
//! index, never from thread identity or scheduling order, and results are
//! collected in index order — so the output is a pure function of the config
//! and the worker count only affects wall-clock time.

use anyhow::Result;
use rayon::prelude::*;

pub struct Farm {
    pool: rayon::ThreadPool,
}

impl Farm {
    pub fn new(workers: usize) -> Result<Farm> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()?;
        Ok(Farm { pool })
    }

    /// Map `f` over `0..count` in parallel, preserving index order.
    pub fn run<T, F>(&self, count: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        self.pool
            .install(|| (0..count).into_par_iter().map(f).collect())
    }
}
