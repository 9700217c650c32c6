//! Streamed sample summaries.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::montecarlo::stream::{chunk_count, chunk_range};
use crate::numeric::CompensatedSum;
use crate::rng::derived_rng;

/// What to record while sampling. Absolute moments E|Z|^p for each order,
/// tail counts of |Z| >= t on a grid, and optionally the raw draws.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct SummarySpec {
    pub moment_orders: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub keep_samples: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MomentEstimate {
    pub p: f64,
    /// Estimate of E|Z|^p.
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TailCount {
    pub t: f64,
    /// Draws with |Z| >= t.
    pub count: u64,
    pub fraction: f64,
}

/// Summary of one seeded run. Identical for every thread count: chunk c of
/// the run consumes stream (seed, c) and partials merge in chunk order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleRun {
    pub seed: u64,
    pub samples: u64,
    /// Signed empirical mean (degeneracy pushes it to 0).
    pub mean: f64,
    pub moments: Vec<MomentEstimate>,
    pub tails: Vec<TailCount>,
    pub max_abs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<Vec<f64>>,
}

struct Partial {
    sum: CompensatedSum,
    pows: Vec<(CompensatedSum, CompensatedSum)>,
    tail_counts: Vec<u64>,
    max_abs: f64,
    draws: Option<Vec<f64>>,
}

/// Runs `f` for `n` seeded draws and summarizes per `spec`.
pub fn run_summaries(
    seed: u64,
    n: u64,
    spec: &SummarySpec,
    f: impl Fn(&mut ChaCha8Rng) -> f64 + Sync,
) -> SampleRun {
    assert!(n > 0, "run_summaries needs at least one draw");
    let partials: Vec<Partial> = (0..chunk_count(n))
        .into_par_iter()
        .map(|c| {
            let mut rng = derived_rng(seed, c);
            let mut part = Partial {
                sum: CompensatedSum::new(),
                pows: vec![Default::default(); spec.moment_orders.len()],
                tail_counts: vec![0; spec.t_grid.len()],
                max_abs: 0.0,
                draws: spec.keep_samples.then(Vec::new),
            };
            for _ in chunk_range(c, n) {
                let z = f(&mut rng);
                let abs = z.abs();
                part.sum.add(z);
                for (slot, &p) in
                    part.pows.iter_mut().zip(&spec.moment_orders)
                {
                    let zp = abs.powf(p);
                    slot.0.add(zp);
                    slot.1.add(zp * zp);
                }
                for (count, &t) in
                    part.tail_counts.iter_mut().zip(&spec.t_grid)
                {
                    if abs >= t {
                        *count += 1;
                    }
                }
                if abs > part.max_abs {
                    part.max_abs = abs;
                }
                if let Some(draws) = &mut part.draws {
                    draws.push(z);
                }
            }
            part
        })
        .collect();

    let mut sum = CompensatedSum::new();
    let mut pows: Vec<(CompensatedSum, CompensatedSum)> =
        vec![Default::default(); spec.moment_orders.len()];
    let mut tail_counts = vec![0u64; spec.t_grid.len()];
    let mut max_abs = 0.0f64;
    let mut draws = spec.keep_samples.then(Vec::new);
    for part in &partials {
        sum.merge(&part.sum);
        for (acc, chunk) in pows.iter_mut().zip(&part.pows) {
            acc.0.merge(&chunk.0);
            acc.1.merge(&chunk.1);
        }
        for (acc, &c) in tail_counts.iter_mut().zip(&part.tail_counts) {
            *acc += c;
        }
        max_abs = max_abs.max(part.max_abs);
        if let (Some(all), Some(chunk)) = (&mut draws, &part.draws) {
            all.extend_from_slice(chunk);
        }
    }

    let nf = n as f64;
    let moments = spec
        .moment_orders
        .iter()
        .zip(&pows)
        .map(|(&p, (s, s2))| {
            let value = s.value() / nf;
            let se = if n > 1 {
                let var =
                    ((s2.value() - nf * value * value) / (nf - 1.0)).max(0.0);
                (var / nf).sqrt()
            } else {
                0.0
            };
            MomentEstimate { p, value, se }
        })
        .collect();
    let tails = spec
        .t_grid
        .iter()
        .zip(&tail_counts)
        .map(|(&t, &count)| TailCount {
            t,
            count,
            fraction: count as f64 / nf,
        })
        .collect();
    SampleRun {
        seed,
        samples: n,
        mean: sum.value() / nf,
        moments,
        tails,
        max_abs,
        draws,
    }
}

impl SampleRun {
    pub fn moment(&self, p: f64) -> Option<&MomentEstimate> {
        self.moments.iter().find(|m| m.p == p)
    }

    pub fn tail(&self, t: f64) -> Option<&TailCount> {
        self.tails.iter().find(|c| c.t == t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spec() -> SummarySpec {
        SummarySpec {
            moment_orders: vec![1.0, 2.0],
            t_grid: vec![0.25, 0.5, 0.75],
            keep_samples: false,
        }
    }

    #[test]
    fn tail_counts_are_monotone() {
        let run =
            run_summaries(3, 50_000, &spec(), |rng| rng.random::<f64>());
        let counts: Vec<u64> = run.tails.iter().map(|c| c.count).collect();
        assert!(counts[0] >= counts[1] && counts[1] >= counts[2]);
        assert!((run.mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn summaries_are_thread_count_invariant() {
        let compute = || {
            run_summaries(9, 20_000, &spec(), |rng| {
                let u: f64 = rng.random();
                u - 0.5
            })
        };
        let a = compute();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(compute);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        for (x, y) in a.moments.iter().zip(&b.moments) {
            assert_eq!(x.value.to_bits(), y.value.to_bits());
            assert_eq!(x.se.to_bits(), y.se.to_bits());
        }
        for (x, y) in a.tails.iter().zip(&b.tails) {
            assert_eq!(x.count, y.count);
        }
    }

    #[test]
    fn kept_draws_are_in_chunk_order() {
        let spec = SummarySpec {
            keep_samples: true,
            ..spec()
        };
        let run = run_summaries(1, 9000, &spec, |rng| rng.random::<f64>());
        let draws = run.draws.as_ref().unwrap();
        assert_eq!(draws.len(), 9000);
        // First draw of chunk 1 comes from stream (1, 1) untouched by the
        // 4096 draws of chunk 0.
        let mut rng = crate::rng::derived_rng(1, 1);
        let expected: f64 = rng.random();
        assert_eq!(draws[4096].to_bits(), expected.to_bits());
    }
}
