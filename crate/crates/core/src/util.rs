use rayon::prelude::*;

/// `ceil(fraction * n)`, with products within 1e-9 of an integer snapped to
/// it so that e.g. `0.7 * 10` counts as 7 rather than 8.
pub fn ceil_count(fraction: f64, n: usize) -> usize {
    let exact = fraction * n as f64;
    let nearest = exact.round();
    let count = if (exact - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) { nearest } else { exact.ceil() };
    (count.max(0.0) as usize).min(n)
}

/// Nearest-rank percentile: the value at index `ceil(p * M) - 1` of the
/// ascending sort, clamped to the first element for `p = 0`.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ceil_count(percentile, sorted.len()).max(1);
    Some(sorted[rank - 1])
}

/// Order-preserving map over `items` on a dedicated pool of `workers`
/// threads. Each output depends only on its own input, so the result does
/// not depend on the worker count.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    if workers <= 1 || items.len() < 2 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()),
        Err(err) => {
            log::warn!("falling back to sequential execution: {err}");
            items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
        }
    }
}

/// Default worker count: the machine's available parallelism.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
