//! Chunked parallel reduction.
//!
//! Work is cut into fixed-size chunks that do not depend on the thread
//! count; chunk results are collected in index order and folded
//! sequentially, so floating-point sums come out bit-identical whatever
//! the pool size.

use rayon::prelude::*;

/// Fold `f(start, end)` over `[0, total)` in chunks of `chunk`.
pub fn chunked_reduce<A, F, M>(total: u64, chunk: u64, mut init: A, f: F, merge: M) -> A
where
    A: Send,
    F: Fn(u64, u64) -> A + Sync,
    M: Fn(&mut A, &A),
{
    assert!(chunk > 0);
    let parts: Vec<A> = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|c| f(c * chunk, ((c + 1) * chunk).min(total)))
        .collect();
    for p in &parts {
        merge(&mut init, p);
    }
    init
}

/// Parallel map preserving order.
pub fn ordered_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    items.par_iter().map(&f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_in(pool: usize) -> f64 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(pool).build().unwrap();
        pool.install(|| {
            chunked_reduce(100_003, 1024, 0.0, |a, b| (a..b).map(|i| 1.0 / (1.0 + i as f64)).sum::<f64>(), |t, x| *t += x)
        })
    }

    #[test]
    fn result_is_independent_of_pool_size() {
        let one = sum_in(1);
        for k in [2, 3, 8] {
            assert_eq!(one.to_bits(), sum_in(k).to_bits());
        }
    }

    #[test]
    fn empty_range_returns_init() {
        assert_eq!(chunked_reduce(0, 8, 7u64, |a, b| b - a, |t, x| *t += x), 7);
    }
}
