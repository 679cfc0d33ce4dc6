//! Execution strategy for data-parallel loops.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] runs on the
//! current rayon pool; without it every call degrades to a plain iterator.
//! Results are always returned in input order, so output never depends on
//! the strategy.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Whether this strategy actually fans out on this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Order-preserving map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over `0..n`.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Sum of `f` over a slice. Summation order is fixed (per-item values are
    /// collected first), so the result is bit-identical across strategies.
    pub fn sum<T, F>(self, items: &[T], f: F) -> f64
    where
        T: Sync,
        F: Fn(&T) -> f64 + Sync + Send,
    {
        self.map(items, f).into_iter().sum()
    }
}
