use rayon::prelude::*;
use torsionlab_core::Executor;

/// Rayon-backed executor. Chunk boundaries come from the caller, so the
/// result of a reduction does not depend on the worker count.
pub struct Pool {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl Pool {
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        Ok(Self { pool, workers })
    }
}

impl Executor for Pool {
    fn map_chunks<T, R, F>(&self, items: &[T], chunk: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&[T]) -> R + Sync + Send,
    {
        if self.workers == 1 {
            return items.chunks(chunk.max(1)).map(f).collect();
        }
        self.pool.install(|| items.par_chunks(chunk.max(1)).map(f).collect())
    }

    fn workers(&self) -> usize {
        self.workers
    }
}

/// Worker count from the flag, then `TORSIONLAB_THREADS`, then the machine.
pub fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("TORSIONLAB_THREADS").ok()?.trim().parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}
