//! Running one closure per seed, sequentially or across a rayon pool.
//!
//! Each closure call is an independent, single-threaded run; only the sweep
//! itself is parallel. Results come back in seed order either way.

/// Sequential sweep.
pub fn seed_sweep_seq<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    seeds.iter().map(|&s| f(s)).collect()
}

/// Parallel sweep over the global rayon pool.
#[cfg(feature = "parallel")]
pub fn seed_sweep_par<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    seeds.par_iter().map(|&s| f(s)).collect()
}

/// Parallel when the `parallel` feature is enabled, sequential otherwise.
pub fn seed_sweep<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        seed_sweep_par(seeds, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        seed_sweep_seq(seeds, f)
    }
}

/// Middle element of the sorted values (mean of the two middle ones for even
/// lengths); `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}
