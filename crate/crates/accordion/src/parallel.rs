use accordion_core::schemes::Executor;
use rayon::prelude::*;

/// Population evaluation on a private rayon pool. One worker evaluates on
/// the calling thread. Results keep input order, so fitness tables do not
/// depend on the worker count.
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    /// `0` uses one worker per available CPU.
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let n = if workers == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { workers };
        let pool = if n > 1 { Some(rayon::ThreadPoolBuilder::new().num_threads(n).build()?) } else { None };
        Ok(Self { pool })
    }

    pub fn count(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }
}

impl Executor for Workers {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match &self.pool {
            None => items.iter().map(f).collect(),
            Some(pool) => pool.install(|| items.par_iter().map(f).collect()),
        }
    }
}
