//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the helpers fan work out over the
//! rayon global pool; without it they run sequentially. Results are always
//! returned in index order, so reductions over them are deterministic no
//! matter which path executed.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(i)` for `i in 0..n` and returns the results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    let out = (0..n).into_par_iter().map(f).collect();

    #[cfg(not(feature = "parallel"))]
    let out = (0..n).map(f).collect();

    out
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    let out = items.par_iter().map(f).collect();

    #[cfg(not(feature = "parallel"))]
    let out = items.iter().map(f).collect();

    out
}

/// Like [`map_range`] but stops at the first error in index order.
pub fn try_map_range<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Send + Sync,
{
    map_range(n, f).into_iter().collect()
}

/// Like [`map_slice`] but stops at the first error in slice order.
pub fn try_map_slice<S, T, E, F>(items: &[S], f: F) -> Result<Vec<T>, E>
where
    S: Sync,
    T: Send,
    E: Send,
    F: Fn(&S) -> Result<T, E> + Send + Sync,
{
    map_slice(items, f).into_iter().collect()
}

/// True when the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
