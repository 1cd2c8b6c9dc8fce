//! Rayon-backed executor for sweep cells and shot streams.

use mwphoton_core::calibration::Executor;
use rayon::prelude::*;

/// Runs jobs on a rayon pool; results keep input order.
#[derive(Debug)]
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    /// `threads = 0` uses one thread per core.
    pub fn new(threads: usize) -> anyhow::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Parallel {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        self.pool.install(|| items.into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let p = Parallel::new(4).unwrap();
        let out = p.map((0..1000).collect(), |x: u64| x * x);
        assert!(out.iter().enumerate().all(|(i, v)| *v == (i * i) as u64));
    }
}
