//! Data-parallel map over independent seeded units.
//!
//! Results come back in input order whatever the thread count, so callers
//! that derive each unit's seed from its key get identical output with or
//! without the `parallel` feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `units`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_units<T, R, F>(units: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    units.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_units<T, R, F>(units: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    map_units_sequential(units, f)
}

pub fn map_units_sequential<T, R, F>(units: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    units.iter().map(f).collect()
}

/// Runs `op` with at most `threads` worker threads; `None` or `Some(0)`
/// keeps the global pool.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send, F: FnOnce() -> R + Send>(threads: Option<usize>, op: F) -> R {
    match threads {
        Some(k) if k > 0 => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(op),
            Err(e) => {
                log::warn!("cannot build a {k}-thread pool ({e}); using the global pool");
                op()
            }
        },
        _ => op(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R, F: FnOnce() -> R>(threads: Option<usize>, op: F) -> R {
    if threads.is_some_and(|k| k > 1) {
        log::warn!("built without the `parallel` feature; ignoring --threads");
    }
    op()
}
