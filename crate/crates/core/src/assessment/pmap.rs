use rayon::prelude::*;

use super::JobResult;

/// Order-preserving map over a batch of assessment jobs.
pub trait ParallelMap: Send + Sync {
    /// Returns `[f(0), f(1), .., f(len - 1)]`, in that order.
    fn map(&self, len: usize, f: &(dyn Fn(usize) -> JobResult + Sync)) -> Vec<JobResult>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SerialMap;

impl ParallelMap for SerialMap {
    fn map(&self, len: usize, f: &(dyn Fn(usize) -> JobResult + Sync)) -> Vec<JobResult> {
        (0..len).map(f).collect()
    }
}

/// Runs jobs on a dedicated rayon pool.
pub struct ThreadPoolMap {
    pool: rayon::ThreadPool,
}

impl ThreadPoolMap {
    /// `threads == 0` lets rayon pick the number of cores.
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        Ok(Self {
            pool: rayon::ThreadPoolBuilder::new().num_threads(threads).build()?,
        })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ParallelMap for ThreadPoolMap {
    fn map(&self, len: usize, f: &(dyn Fn(usize) -> JobResult + Sync)) -> Vec<JobResult> {
        self.pool
            .install(|| (0..len).into_par_iter().map(f).collect())
    }
}
