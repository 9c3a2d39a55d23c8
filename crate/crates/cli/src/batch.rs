//! Worker pool over independent jobs. Results come back indexed by job, so
//! output never depends on completion order or on the number of workers.

use rayon::prelude::*;

use crate::error::{CliError, CliResult};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "ISMARKET_WORKERS";

pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `job(0..n)` on `workers` threads and returns the results in job order.
pub fn run_batch<T, F>(n: usize, workers: usize, job: F) -> CliResult<Vec<CliResult<T>>>
where
    T: Send,
    F: Fn(usize) -> CliResult<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Run(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&job).collect()))
}

/// Splits batch results into successes and `(job, message)` failures.
pub fn partition<T>(results: Vec<CliResult<T>>) -> (Vec<Option<T>>, Vec<(usize, String)>) {
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(Some(v)),
            Err(e) => {
                failed.push((i, e.to_string()));
                ok.push(None);
            }
        }
    }
    (ok, failed)
}
