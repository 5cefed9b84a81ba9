//! Deterministic reductions.
//!
//! Work is always split into fixed-size chunks whose boundaries depend only on
//! the input length. Each chunk is reduced with compensated summation and the
//! partial results are folded in chunk order, so the bits of the answer do not
//! depend on how many workers processed the chunks.

use alloc::vec::Vec;

/// Default number of items per chunk.
pub const DEFAULT_CHUNK: usize = 2048;

/// Runs a function over consecutive chunks of a slice and returns the results
/// in chunk order. Implementations may run chunks concurrently but must
/// preserve order.
pub trait Executor: Sync {
    fn map_chunks<T, R, F>(&self, items: &[T], chunk: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&[T]) -> R + Sync + Send;

    fn workers(&self) -> usize {
        1
    }
}

/// Single-threaded executor.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_chunks<T, R, F>(&self, items: &[T], chunk: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&[T]) -> R + Sync + Send,
    {
        items.chunks(chunk.max(1)).map(f).collect()
    }
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub const fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Kahan) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl core::iter::FromIterator<f64> for Kahan {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = Kahan::new();
        for x in iter {
            k.add(x);
        }
        k
    }
}

/// Compensated sum of `f(x)` over `items`, chunked and folded in order.
pub fn deterministic_sum<E, T, F>(exec: &E, items: &[T], chunk: usize, f: F) -> f64
where
    E: Executor,
    T: Sync,
    F: Fn(&T) -> f64 + Sync + Send,
{
    let parts = exec.map_chunks(items, chunk, |c| c.iter().map(&f).collect::<Kahan>());
    let mut total = Kahan::new();
    for p in &parts {
        total.merge(p);
    }
    total.value()
}

/// Several compensated sums at once (one pass over the data).
pub fn deterministic_sums<E, T, F, const K: usize>(exec: &E, items: &[T], chunk: usize, f: F) -> [f64; K]
where
    E: Executor,
    T: Sync,
    F: Fn(&T) -> [f64; K] + Sync + Send,
{
    let parts = exec.map_chunks(items, chunk, |c| {
        let mut acc = [Kahan::new(); K];
        for x in c {
            let v = f(x);
            for (a, vi) in acc.iter_mut().zip(v) {
                a.add(vi);
            }
        }
        acc
    });
    let mut total = [Kahan::new(); K];
    for p in &parts {
        for (t, q) in total.iter_mut().zip(p) {
            t.merge(q);
        }
    }
    total.map(|k| k.value())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_summation() {
        let xs: Vec<f64> = core::iter::once(1.0).chain(core::iter::repeat(1e-16).take(10_000)).collect();
        let naive: f64 = xs.iter().sum();
        let k: Kahan = xs.iter().copied().collect();
        assert_eq!(naive, 1.0);
        assert!((k.value() - (1.0 + 1e-12)).abs() < 1e-20);
    }

    #[test]
    fn chunking_is_independent_of_executor() {
        let xs: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let a = deterministic_sum(&Sequential, &xs, 64, |x| *x);
        let b = deterministic_sum(&Sequential, &xs, 64, |x| *x);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
