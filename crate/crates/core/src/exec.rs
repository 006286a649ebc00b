//! Data-parallel execution helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the dispatching variants fan work
//! out over rayon; without it they alias the sequential ones. Work is always
//! split by a fixed chunk plan and merged in chunk order, so results are
//! bitwise identical regardless of feature flags or thread count.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk plan over `0..n`; independent of thread count.
pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    assert!(chunk > 0, "chunk size must be positive");
    (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect()
}

/// Map items to results, preserving input order.
pub fn map_items_seq<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U + Sync + Send,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(feature = "parallel")]
pub fn map_items<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U + Sync + Send,
{
    items
        .par_iter()
        .enumerate()
        .map(|(i, x)| f(i, x))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_items<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U + Sync + Send,
{
    map_items_seq(items, f)
}

/// Map fixed chunks of `0..n` to partial results, returned in chunk order.
pub fn map_chunks_seq<U: Send, F>(n: usize, chunk: usize, f: F) -> Vec<U>
where
    F: Fn(Range<usize>) -> U + Sync + Send,
{
    chunk_ranges(n, chunk).into_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_chunks<U: Send, F>(n: usize, chunk: usize, f: F) -> Vec<U>
where
    F: Fn(Range<usize>) -> U + Sync + Send,
{
    chunk_ranges(n, chunk).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_chunks<U: Send, F>(n: usize, chunk: usize, f: F) -> Vec<U>
where
    F: Fn(Range<usize>) -> U + Sync + Send,
{
    map_chunks_seq(n, chunk, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_plan_covers_range_exactly() {
        let ranges = chunk_ranges(10, 4);
        assert_eq!(ranges, vec![0..4, 4..8, 8..10]);
        assert_eq!(chunk_ranges(0, 4), Vec::<Range<usize>>::new());
        assert_eq!(chunk_ranges(4, 4), vec![0..4]);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<u64> = (0..137).collect();
        let f = |i: usize, x: &u64| (i as u64) * 3 + x * x;
        assert_eq!(map_items(&items, f), map_items_seq(&items, f));
        let g = |r: Range<usize>| r.map(|i| i as u64 * 7).sum::<u64>();
        assert_eq!(map_chunks(137, 16, g), map_chunks_seq(137, 16, g));
    }
}
