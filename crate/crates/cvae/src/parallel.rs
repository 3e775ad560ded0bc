//! Executors for the `--threads` flag.

use cvae_core::exec::{Executor, Sequential};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs jobs on a dedicated rayon pool. Results come back in job order and
/// the chunking depends only on the thread count, so a run is reproducible
/// for a fixed `--threads` value.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
    threads: usize,
}

impl RayonExecutor {
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Usage(format!("cannot start {threads} threads: {e}")))?;
        Ok(Self { pool, threads })
    }
}

impl Executor for RayonExecutor {
    fn parallelism(&self) -> usize {
        self.threads
    }

    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

/// `--threads 0` is the sequential reference; anything else uses rayon.
pub enum Exec {
    Sequential(Sequential),
    Rayon(RayonExecutor),
}

impl Exec {
    pub fn from_threads(threads: usize) -> Result<Self> {
        if threads == 0 {
            Ok(Exec::Sequential(Sequential))
        } else {
            Ok(Exec::Rayon(RayonExecutor::new(threads)?))
        }
    }
}

impl Executor for Exec {
    fn parallelism(&self) -> usize {
        match self {
            Exec::Sequential(s) => s.parallelism(),
            Exec::Rayon(r) => r.parallelism(),
        }
    }

    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential(s) => s.map(n, f),
            Exec::Rayon(r) => r.map(n, f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_keep_job_order() {
        let e = Exec::from_threads(3).unwrap();
        assert_eq!(e.parallelism(), 3);
        assert_eq!(e.map(100, |i| i * i), (0..100).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(Exec::from_threads(0).unwrap().parallelism(), 1);
    }
}
