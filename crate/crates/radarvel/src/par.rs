//! Indexed map helpers that fan out via rayon when the `parallel` feature is
//! enabled and degrade to plain loops otherwise. Results are collected in
//! index order, so output never depends on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn try_map_indexed<T: Send, E: Send>(
    n: usize,
    f: impl Fn(usize) -> Result<T, E> + Sync + Send,
) -> Result<Vec<T>, E> {
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn try_map_indexed<T, E>(
    n: usize,
    f: impl Fn(usize) -> Result<T, E>,
) -> Result<Vec<T>, E> {
    (0..n).map(f).collect()
}
