//! Replicate-level parallelism with order-independent results: item `i`
//! always uses the stream `(seed, i)` and outputs are returned in index
//! order.

use std::ops::Range;

use rayon::prelude::*;

use crate::sampler::RngStream;

/// Maps `f` over `range`, giving item `i` its own stream `(seed, i)`.
pub fn par_map<T, F>(seed: u64, range: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut RngStream) -> T + Sync,
{
    range
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i);
            f(i, &mut rng)
        })
        .collect()
}

/// Processes items in rounds of `round` until `done` reports that the
/// accumulated outputs suffice or `max_items` is reached. Items beyond the
/// first that satisfies `done` are still returned if they belong to the
/// same round; callers truncate deterministically.
pub fn par_until<T, F, D>(seed: u64, round: u64, max_items: u64, f: F, mut done: D) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut RngStream) -> T + Sync,
    D: FnMut(&[T]) -> bool,
{
    let mut out = Vec::new();
    let mut start = 0;
    while start < max_items {
        let end = (start + round).min(max_items);
        out.extend(par_map(seed, start..end, &f));
        start = end;
        if done(&out) {
            break;
        }
    }
    out
}
