//! Data-parallel helpers. With the `parallel` feature the work is spread
//! over a rayon pool; without it everything runs on the calling thread in
//! the same order, so results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of workers the current context would use.
pub fn current_workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// A worker pool that closures can be installed into from any thread.
/// `workers == 0` means the default pool.
pub struct Pool {
    #[cfg(feature = "parallel")]
    inner: Option<rayon::ThreadPool>,
}

impl Pool {
    pub fn new(workers: usize) -> Pool {
        #[cfg(feature = "parallel")]
        {
            let inner = if workers == 0 {
                None
            } else {
                match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                    Ok(p) => Some(p),
                    Err(e) => {
                        log::warn!("could not build a {workers}-thread pool ({e}); using the default");
                        None
                    }
                }
            };
            Pool { inner }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = workers;
            Pool {}
        }
    }

    /// Runs `f` with this pool backing the helpers below.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        {
            match &self.inner {
                Some(p) => p.install(f),
                None => f(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            f()
        }
    }

    pub fn workers(&self) -> usize {
        #[cfg(feature = "parallel")]
        {
            match &self.inner {
                Some(p) => p.current_num_threads(),
                None => rayon::current_num_threads(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            1
        }
    }
}

/// Runs `f` with `workers` threads available to the helpers below.
/// `workers == 0` keeps the default pool.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    Pool::new(workers).install(f)
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_keeps_order() {
        let v: Vec<u64> = (0..1000).collect();
        let out = with_workers(4, || map(&v, |x| x * x));
        assert_eq!(out, v.iter().map(|x| x * x).collect::<Vec<_>>());
        assert_eq!(map_range(5, |i| i + 1), vec![1, 2, 3, 4, 5]);
        let pool = Pool::new(3);
        #[cfg(feature = "parallel")]
        assert_eq!(pool.install(current_workers), 3);
        assert_eq!(pool.install(|| map(&v, |x| x + 1))[999], 1000);
    }
}
