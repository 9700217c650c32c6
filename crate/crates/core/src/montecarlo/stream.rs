//! Deterministic chunked sampling.
//!
//! Draws are split into fixed-size chunks; chunk c consumes the ChaCha8
//! stream (seed, c), and chunk partials are merged in chunk order. Summaries
//! are therefore bit-identical for any thread count, including one.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::numeric::CompensatedSum;
use crate::rng::derived_rng;

pub const CHUNK_SIZE: u64 = 4096;

#[derive(Debug, Clone, Copy)]
pub struct MeanSummary {
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation / sqrt(n)).
    pub se: f64,
    pub n: u64,
}

/// Number of chunks covering `n` samples.
pub(crate) fn chunk_count(n: u64) -> u64 {
    n.div_ceil(CHUNK_SIZE)
}

/// Sample range of chunk `c`.
pub(crate) fn chunk_range(c: u64, n: u64) -> std::ops::Range<u64> {
    let lo = c * CHUNK_SIZE;
    lo..(lo + CHUNK_SIZE).min(n)
}

/// Mean and standard error of `f` over `n` seeded draws.
pub fn sample_mean(
    seed: u64,
    n: u64,
    f: impl Fn(&mut ChaCha8Rng) -> f64 + Sync,
) -> MeanSummary {
    assert!(n > 0, "sample_mean needs at least one draw");
    let chunks: Vec<(CompensatedSum, CompensatedSum)> = (0..chunk_count(n))
        .into_par_iter()
        .map(|c| {
            let mut rng = derived_rng(seed, c);
            let mut sum = CompensatedSum::new();
            let mut sum_sq = CompensatedSum::new();
            for _ in chunk_range(c, n) {
                let x = f(&mut rng);
                sum.add(x);
                sum_sq.add(x * x);
            }
            (sum, sum_sq)
        })
        .collect();
    let mut sum = CompensatedSum::new();
    let mut sum_sq = CompensatedSum::new();
    for (s, s2) in &chunks {
        sum.merge(s);
        sum_sq.merge(s2);
    }
    let nf = n as f64;
    let mean = sum.value() / nf;
    let se = if n > 1 {
        let var = ((sum_sq.value() - nf * mean * mean) / (nf - 1.0)).max(0.0);
        (var / nf).sqrt()
    } else {
        0.0
    };
    MeanSummary { mean, se, n }
}
