//! Execution mode for the data-parallel loops.
//!
//! Every parallel reduction in the crate splits its input into fixed-size
//! chunks and combines the partial results in chunk order, so `Sequential`
//! and `Parallel` produce bit-identical output regardless of thread count.
//! Without the `parallel` feature both modes run sequentially.

use serde::{Deserialize, Serialize};

/// Rows per chunk for chunked reductions.
pub const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Ordered map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Ordered map over `0..n`.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Chunked reduction over `0..n`: `partial` is called once per
    /// `[lo, hi)` chunk of at most [`CHUNK`] indices and the partials are
    /// folded left-to-right with `combine`.
    pub fn reduce_chunks<R, P, C>(self, n: usize, partial: P, mut combine: C) -> Option<R>
    where
        R: Send,
        P: Fn(usize, usize) -> R + Sync + Send,
        C: FnMut(R, R) -> R,
    {
        let chunks = n.div_ceil(CHUNK);
        let parts = self.map_range(chunks, |c| partial(c * CHUNK, ((c + 1) * CHUNK).min(n)));
        let mut iter = parts.into_iter();
        let first = iter.next()?;
        Some(iter.fold(first, &mut combine))
    }
}
