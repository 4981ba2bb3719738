//! Execution helpers for data-parallel inner loops.
//!
//! With the `parallel` feature (default) these run on rayon; without it they
//! fall back to plain iteration. Outputs are always collected in index order
//! and reductions fold collected partials sequentially, so both build modes
//! produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..len`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_collect<U, F>(len: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..len).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..len`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<U, F>(len: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..len).map(f).collect()
}

/// Sequential reference version of [`map_collect`], kept available in every
/// build so benchmarks can compare both paths.
pub fn map_collect_seq<U, F>(len: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..len).map(f).collect()
}

/// Block size used when Monte Carlo replicates are accumulated in blocks.
/// The block partition is part of the numeric contract: floating sums are
/// always folded block-by-block in block order, in both build modes.
pub const REPLICATE_BLOCK: usize = 512;

/// Splits `0..len` into consecutive blocks of at most `block` items.
pub fn blocks(len: usize, block: usize) -> Vec<std::ops::Range<usize>> {
    assert!(block > 0);
    (0..len)
        .step_by(block)
        .map(|start| start..(start + block).min(len))
        .collect()
}

/// Maps each block of `0..len` to a partial accumulator (possibly in
/// parallel) and folds the partials in block order.
pub fn block_fold<A, M, F>(len: usize, block: usize, map: M, fold: F, init: A) -> A
where
    A: Send,
    M: Fn(std::ops::Range<usize>) -> A + Sync + Send,
    F: FnMut(A, A) -> A,
{
    let ranges = blocks(len, block);
    let partials = map_collect(ranges.len(), |i| map(ranges[i].clone()));
    partials.into_iter().fold(init, fold)
}
