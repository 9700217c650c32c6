//! Deterministic seed derivation.
//!
//! Every randomized routine draws from ChaCha8 streams keyed by a base seed
//! plus a counter (restart index, chunk index, sample index). Work units can
//! then run in any order, on any number of threads, and still consume
//! identical random sequences.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// RNG for work unit `stream` of the job keyed by `seed`.
pub fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard-normal vector of length `len`.
pub fn normal_vector(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Uniform point on the unit sphere in `len` dimensions.
pub fn random_unit_vector(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    loop {
        let mut v = normal_vector(rng, len);
        let norm = crate::numeric::l2_norm(&v);
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
}
