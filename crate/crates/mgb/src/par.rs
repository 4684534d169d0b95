//! Sequential/parallel iteration shims.
//!
//! Hot loops (patient generation, Monte Carlo trials, per-voxel quantiles)
//! go through these helpers so the `parallel` feature can swap rayon in and
//! out without touching call sites. Every mapped closure is a pure function
//! of its index, so both code paths produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, preserving index order in the output.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}
