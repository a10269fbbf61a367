//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run the same closures on the calling thread. [`Exec`] lets callers and
//! benches pick a path at runtime when both are compiled in.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Minimum work items per task before splitting is worth it.
pub const MIN_CHUNK: usize = 4096;

/// Applies `f(chunk_index, chunk)` to consecutive chunks of `data`.
pub fn for_each_chunk_mut<T, F>(exec: Exec, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Maps `f` over `0..n` and collects results in order.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Sums `f(chunk_start, chunk_end)` over a partition of `0..n`.
pub fn sum_chunks<R, F>(exec: Exec, n: usize, chunk: usize, f: F) -> R
where
    R: Send + std::iter::Sum<R> + std::ops::Add<Output = R> + Default,
    F: Fn(usize, usize) -> R + Send + Sync,
{
    let chunk = chunk.max(1);
    let nchunks = n.div_ceil(chunk);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && nchunks > 1 {
        use rayon::prelude::*;
        return (0..nchunks)
            .into_par_iter()
            .map(|c| f(c * chunk, ((c + 1) * chunk).min(n)))
            .sum();
    }
    let _ = exec;
    (0..nchunks)
        .map(|c| f(c * chunk, ((c + 1) * chunk).min(n)))
        .sum()
}

/// Consumes `items`, applying `f` to each (in parallel when enabled).
pub fn for_each_owned<T, F>(exec: Exec, items: Vec<T>, f: F)
where
    T: Send,
    F: Fn(T) + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        items.into_par_iter().for_each(f);
        return;
    }
    let _ = exec;
    items.into_iter().for_each(f);
}

/// Number of worker threads the parallel path will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Configures the global pool. Later calls are ignored by rayon.
pub fn init_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}
