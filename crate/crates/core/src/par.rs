//! Execution policy for data-parallel loops.
//!
//! Every parallel loop in the crate maps over a fixed partition of its input
//! and reduces the per-part results in index order, so the sequential and
//! parallel policies produce bit-identical output.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, else sequential.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Order-preserving map over `0..n`.
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

    /// Order-preserving map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.map_range(items.len(), |i| f(&items[i]))
    }

    /// Maps over consecutive chunks of `0..n` of length `chunk` (the last may
    /// be shorter). The partition depends only on `n` and `chunk`.
    pub fn map_chunks<R, F>(self, n: usize, chunk: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(Range<usize>) -> R + Sync + Send,
    {
        let chunk = chunk.max(1);
        let parts = n.div_ceil(chunk);
        self.map_range(parts, |p| f(p * chunk..((p + 1) * chunk).min(n)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        assert_eq!(
            Exec::Sequential.map_range(1000, f),
            Exec::Parallel.map_range(1000, f)
        );
    }

    #[test]
    fn chunks_cover_range() {
        let parts = Exec::Sequential.map_chunks(10, 4, |r| r);
        assert_eq!(parts, vec![0..4, 4..8, 8..10]);
        assert!(Exec::Sequential.map_chunks(0, 4, |r| r).is_empty());
    }
}
