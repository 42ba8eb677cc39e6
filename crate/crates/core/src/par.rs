//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the helpers fan out over rayon when the
//! executor is in parallel mode; otherwise, or without the feature, they run
//! in order on the calling thread. Results are always returned in input
//! order, so output never depends on scheduling.

use crate::error::Result;
#[cfg(test)]
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exec {
    parallel: bool,
}

impl Exec {
    pub const SEQUENTIAL: Exec = Exec { parallel: false };

    /// Parallel if requested and compiled in.
    pub fn new(parallel: bool) -> Self {
        Self {
            parallel: parallel && cfg!(feature = "parallel"),
        }
    }

    pub fn is_parallel(&self) -> bool {
        self.parallel
    }

    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    pub fn map_range<U, F>(&self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    pub fn try_map<T, U, F>(&self, items: &[T], f: F) -> Result<Vec<U>>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> Result<U> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }

    pub fn try_map_range<U, F>(&self, n: usize, f: F) -> Result<Vec<U>>
    where
        U: Send,
        F: Fn(usize) -> Result<U> + Sync + Send,
    {
        self.map_range(n, f).into_iter().collect()
    }
}

/// Run `f` inside a pool of `workers` threads (0 = rayon default).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| crate::error::Error::Config(format!("cannot build worker pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(f())
    }
}
