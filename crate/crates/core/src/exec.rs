//! Data-parallel execution with a sequential fallback.
//!
//! Every parallel helper here splits work into fixed-size chunks whose
//! boundaries do not depend on the thread count, and results are returned in
//! chunk order. Reductions performed by callers over those results are
//! therefore bit-identical between [`Exec::Sequential`] and
//! [`Exec::Parallel`], and across machines with different core counts.
//!
//! Without the `parallel` feature, [`Exec::Parallel`] runs sequentially.

use serde::{Deserialize, Serialize};

/// Number of examples processed per unit of parallel work.
pub const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this build can actually run work on more than one thread.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over consecutive chunks of `items`, passing each chunk's
    /// starting offset. Output order matches chunk order.
    pub fn map_chunks<T, R, F>(self, items: &[T], chunk: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &[T]) -> R + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return items
                .par_chunks(chunk)
                .enumerate()
                .map(|(i, c)| f(i * chunk, c))
                .collect();
        }
        items
            .chunks(chunk)
            .enumerate()
            .map(|(i, c)| f(i * chunk, c))
            .collect()
    }

    /// Applies `f` to each mutable row-chunk of `data` (rows of width `width`),
    /// passing the index of the first row in the chunk.
    pub fn for_each_rows_mut<F>(self, data: &mut [f64], width: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if width == 0 || data.is_empty() {
            return;
        }
        let step = width * CHUNK;
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            data.par_chunks_mut(step)
                .enumerate()
                .for_each(|(i, c)| f(i * CHUNK, c));
            return;
        }
        data.chunks_mut(step)
            .enumerate()
            .for_each(|(i, c)| f(i * CHUNK, c));
    }

    /// Maps `f` over `0..n`, one task per index. Intended for coarse work such
    /// as grid cells or output units.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}
