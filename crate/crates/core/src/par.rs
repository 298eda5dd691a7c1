//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) index maps run on the rayon pool;
//! without it they fall back to a plain sequential loop. Results are always
//! collected in index order, so aggregation is independent of scheduling.

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_range_sequential(n, f)
    }
}

/// Sequential reference path for [`map_range`].
pub fn map_range_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Run `op` with at most `jobs` worker threads. `None` uses the global pool.
pub fn with_jobs<R, F>(jobs: Option<usize>, op: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        match jobs {
            Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
                Ok(pool) => pool.install(op),
                Err(_) => op(),
            },
            None => op(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        op()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let par = with_jobs(Some(3), || map_range(1000, |i| i * i));
        let seq = map_range_sequential(1000, |i| i * i);
        assert_eq!(par, seq);
    }
}
