//! Fixed-size worker pool over an indexed job list.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "LNSSM_THREADS";

/// Worker count: `LNSSM_THREADS` if set and positive, else the available
/// parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
}

/// Applies `f` to every job on up to `workers` threads. Results come back
/// in job order whatever the scheduling.
pub fn map_ordered<J, T, F>(jobs: &[J], workers: usize, f: F) -> Vec<T>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> T + Sync,
{
    let workers = workers.clamp(1, jobs.len().max(1));
    if workers == 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let out = f(&jobs[i]);
                slots.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|v| v.expect("every job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let jobs: Vec<u64> = (0..100).collect();
        let serial = map_ordered(&jobs, 1, |j| j * j);
        assert_eq!(map_ordered(&jobs, 4, |j| j * j), serial);
        assert!(map_ordered(&[] as &[u64], 3, |j| *j).is_empty());
    }
}
