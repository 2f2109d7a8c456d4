//! Fallible map over a slice, on the rayon pool when the `parallel` feature
//! is enabled. Results keep input order.

use crate::error::Result;

#[cfg(feature = "parallel")]
pub(crate) fn try_map<I, T, F>(items: &[I], f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn try_map<I, T, F>(items: &[I], f: F) -> Result<Vec<T>>
where
    F: Fn(&I) -> Result<T>,
{
    items.iter().map(f).collect()
}
