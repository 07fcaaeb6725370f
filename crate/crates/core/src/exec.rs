//! Execution policy for the data-parallel kernels.
//!
//! Every batch kernel in this crate (per-site dual aggregation, raster fill,
//! random-start sweeps, replications) goes through the helpers here. Sums are
//! taken over fixed-size blocks whose partial results are combined in block
//! order, so the sequential and parallel paths produce bit-identical output
//! regardless of the number of worker threads.
//!
//! With the `parallel` feature disabled, [`Exec::Parallel`] silently runs on
//! the calling thread.

/// Number of items folded sequentially into one partial sum.
pub const BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `0..n`, preserving index order in the output.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Folds `0..n` in blocks of [`BLOCK`] items and returns the per-block
    /// accumulators in block order.
    ///
    /// `init` creates an empty accumulator and `fold` adds item `i` into it.
    pub fn fold_blocks<A, I, F>(self, n: usize, init: I, fold: F) -> Vec<A>
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(&mut A, usize) + Sync + Send,
    {
        let blocks = n.div_ceil(BLOCK);
        self.map(blocks, |b| {
            let mut acc = init();
            let end = ((b + 1) * BLOCK).min(n);
            for i in b * BLOCK..end {
                fold(&mut acc, i);
            }
            acc
        })
    }

    /// Deterministic blocked sum of `f(i)` over `0..n`.
    pub fn sum<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        self.fold_blocks(n, || 0.0, |acc, i| *acc += f(i))
            .into_iter()
            .sum()
    }
}
