//! Data-parallel map over independent jobs. Uses rayon with the `parallel`
//! feature and a plain sequential loop otherwise.

/// Applies `f` to every item and returns results in input order.
#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    seq_map(items, f)
}

/// Sequential reference path, always available.
pub fn seq_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Sizes the global worker pool. `None` keeps the default (one per core).
/// Returns the number of workers in use.
pub fn init_threads(threads: Option<usize>) -> usize {
    #[cfg(feature = "parallel")]
    {
        if let Some(t) = threads.filter(|t| *t > 0) {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        1
    }
}
