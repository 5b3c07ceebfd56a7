//! Thin switch between rayon-backed and sequential execution.
//!
//! With the default `parallel` feature the helpers fan independent work items
//! out over rayon; without it they degrade to plain iterators and the crate
//! builds with no threading dependency at all. The `_seq` twin is always
//! sequential so benchmarks can compare both paths inside one build.
//!
//! Callers must only hand over order-independent work: results are collected
//! in input order and nothing else about execution order is observable.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Byte length below which elementwise kernels stay sequential; fanning out
/// tiny slices costs more than the combine itself.
pub(crate) const PAR_BYTE_THRESHOLD: usize = 1 << 16;

/// Map `f` over `items` and collect the results in input order.
#[cfg(feature = "parallel")]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over `items` and collect the results in input order.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Always-sequential twin of [`map_collect`], kept available in parallel
/// builds so the criterion suite can bench both paths side by side.
pub fn map_collect_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Apply `f` to corresponding `block`-sized chunks of `acc` and `operand`.
///
/// `block` must be a multiple of the element width so chunk boundaries never
/// split an element; per-chunk work is independent, so the parallel and
/// sequential paths produce bit-identical results.
pub(crate) fn zip_chunks_mut<F>(acc: &mut [u8], operand: &[u8], block: usize, f: F)
where
    F: Fn(&mut [u8], &[u8]) + Sync + Send,
{
    debug_assert_eq!(acc.len(), operand.len());
    #[cfg(feature = "parallel")]
    {
        if acc.len() >= PAR_BYTE_THRESHOLD {
            acc.par_chunks_mut(block)
                .zip(operand.par_chunks(block))
                .for_each(|(a, o)| f(a, o));
            return;
        }
    }
    for (a, o) in acc.chunks_mut(block).zip(operand.chunks(block)) {
        f(a, o);
    }
}
