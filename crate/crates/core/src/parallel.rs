//! Deterministic chunked parallel evaluation.
//!
//! Work is split into fixed-size chunks whose boundaries depend only on the
//! problem size; per-chunk partial results come back in chunk order and are
//! folded sequentially by the caller. Results are therefore bitwise identical
//! for any rayon pool size.

use std::ops::Range;

use rayon::prelude::*;

use crate::geometry::RandomStream;

pub const DEFAULT_CHUNK: usize = 4096;

pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    (0..n_chunks)
        .into_par_iter()
        .map(|k| f(k, k * chunk..((k + 1) * chunk).min(n)))
        .collect()
}

/// Monte Carlo averages of `K` quantities over `samples` draws. Chunk `k`
/// draws from `base.derive(k)`; `draw` produces one sample's values.
pub fn mc_accumulate<const K: usize, F>(
    samples: usize,
    base: &RandomStream,
    draw: F,
) -> [MeanAccumulator; K]
where
    F: Fn(&mut RandomStream) -> [f64; K] + Sync + Send,
{
    let parts = map_chunks(samples, DEFAULT_CHUNK, |k, range| {
        let mut rng = base.derive(k as u64);
        let mut acc = [MeanAccumulator::default(); K];
        for _ in range {
            for (a, v) in acc.iter_mut().zip(draw(&mut rng)) {
                a.push(v);
            }
        }
        acc
    });
    let mut total = [MeanAccumulator::default(); K];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}

/// Running sums for a sample mean and its standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &MeanAccumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean (sample variance with Bessel correction).
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_results_are_pool_size_independent() {
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                map_chunks(10_001, 97, |k, r| {
                    r.map(|i| ((i * 31 + k) as f64).sin()).sum::<f64>()
                })
            })
        };
        let one = run(1);
        assert_eq!(one.len(), 104);
        assert_eq!(one, run(4));
    }

    #[test]
    fn accumulator_stats() {
        let mut acc = MeanAccumulator::default();
        for x in [1.0, -1.0, 1.0, -1.0] {
            acc.push(x);
        }
        assert_eq!(acc.mean(), 0.0);
        assert!((acc.stderr() - (4.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let mut constant = MeanAccumulator::default();
        for _ in 0..10 {
            constant.push(-1.0);
        }
        assert_eq!(constant.stderr(), 0.0);
    }
}
