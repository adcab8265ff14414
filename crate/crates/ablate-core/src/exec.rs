//! Bounded data-parallel execution with a sequential fallback.
//!
//! Scoring sweeps (samples × ablations) are embarrassingly parallel and
//! every job is pure, so results are assembled in input order and are
//! identical at any parallelism setting. With the `parallel` feature
//! enabled, [`run_scoped`] installs a rayon pool of exactly
//! `parallelism` threads — which also bounds in-flight backend requests
//! — and [`map_ordered`] runs inside whatever pool is current. Without
//! the feature (or at parallelism 1) everything degrades to plain
//! sequential iteration.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Run `job` inside a dedicated thread pool of `parallelism` threads.
/// At parallelism ≤ 1 (or without the `parallel` feature) the job runs
/// on the calling thread and nested [`map_ordered`] calls stay serial.
pub fn run_scoped<R: Send>(parallelism: usize, job: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if parallelism > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .expect("failed to build worker pool");
        return pool.install(job);
    }
    let _ = parallelism;
    job()
}

/// Map `f` over `items`, preserving input order in the output. Runs on
/// the current rayon pool when `parallel` is set and the feature is
/// enabled; otherwise sequentially.
pub fn map_ordered<I, O, F>(items: &[I], parallel: bool, f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}
