//! Execution-mode switch for the data-parallel inner loops.
//!
//! Every hot kernel has a `*_with(.., Exec)` form. `Exec::Parallel` fans the
//! outer loop (rows, channels, blocks) out over rayon when the `parallel`
//! feature is enabled and silently degrades to a plain loop otherwise.
//! `Exec::Sequential` always runs on the calling thread; timing code uses it
//! so that scaling measurements are not confounded by parallel speedup.
//!
//! Work is only ever split along independent output units, so both modes
//! produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when work will actually be distributed across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Runs `f(index, chunk)` over consecutive `chunk_len`-sized pieces of `data`.
pub(crate) fn for_each_chunk<T, F>(exec: Exec, data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Evaluates `f` on `0..n` and collects the results in index order.
pub(crate) fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}
