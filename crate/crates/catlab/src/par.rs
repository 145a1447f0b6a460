//! Data-parallel sweep helper with a sequential fallback.
//!
//! Sweeps over seeds, catalytic tapes and hash functions are embarrassingly
//! parallel; each returns an exact value per index, so parallel and
//! sequential execution produce identical results. The `parallel` cargo
//! feature gates the rayon dependency; without it (or with
//! [`Parallelism::Sequential`]) everything runs on the calling thread.

/// Execution mode for index sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// Run on the calling thread in index order.
    Sequential,
    /// Use the rayon thread pool when compiled in; otherwise identical to
    /// [`Parallelism::Sequential`].
    #[default]
    Parallel,
}

impl Parallelism {
    /// Maps a worker-thread request (`--jobs`) to a mode: `Some(1)` forces
    /// sequential, anything else uses the pool (sized when `n > 1`).
    pub fn from_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            Some(1) => Parallelism::Sequential,
            Some(n) if n > 1 => {
                #[cfg(feature = "parallel")]
                {
                    // Best-effort: the global pool can only be sized once.
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
                Parallelism::Parallel
            }
            _ => Parallelism::Parallel,
        }
    }

    /// Applies `f` to every index in `0..n`, preserving index order in the
    /// result vector regardless of mode.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        match self {
            Parallelism::Sequential => (0..n).map(f).collect(),
            Parallelism::Parallel => {
                #[cfg(feature = "parallel")]
                {
                    use rayon::prelude::*;
                    (0..n).into_par_iter().map(f).collect()
                }
                #[cfg(not(feature = "parallel"))]
                {
                    (0..n).map(f).collect()
                }
            }
        }
    }

    /// Applies `f` to every item of a slice, preserving order.
    pub fn map_slice<'a, T, U, F>(self, items: &'a [T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&'a T) -> U + Sync + Send,
    {
        self.map_range(items.len(), |i| f(&items[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let f = |i: usize| (i * i) as u64;
        let seq = Parallelism::Sequential.map_range(100, f);
        let par = Parallelism::Parallel.map_range(100, f);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 49);
    }

    #[test]
    fn slice_map_matches_iterator() {
        let items: Vec<u32> = (0..50).collect();
        let out = Parallelism::Parallel.map_slice(&items, |x| x + 1);
        assert_eq!(out, items.iter().map(|x| x + 1).collect::<Vec<_>>());
    }

    #[test]
    fn jobs_one_is_sequential() {
        assert_eq!(Parallelism::from_jobs(Some(1)), Parallelism::Sequential);
        assert_eq!(Parallelism::from_jobs(None), Parallelism::Parallel);
    }
}
