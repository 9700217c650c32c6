//! Partition norms of multi-index arrays.
//!
//! For a partition J = {J_1, ..., J_k} of the axes of an array A, the norm
//! is the supremum of the multilinear form sum_i a_i * x^(1)[i_{J_1}] * ...
//! * x^(k)[i_{J_k}] over unit vectors x^(j), one per block, each indexed by
//! the block's combined axes. Degree 1 is the Frobenius norm, degree 2 the
//! spectral norm of the matricization, all singletons the injective norm.
//!
//! Exact evaluation is available through degree 2 (SVD). Higher degrees use
//! block alternating maximization: each block update is a normalized
//! contraction, so the form value never decreases and converges to a
//! critical value. Certificates always carry the achieving witnesses, so
//! every reported value is a verified lower bound of the true norm.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};
use crate::rng::{derived_rng, random_unit_vector};
use crate::tensor::{matricize, MultiIndexArray, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMethod {
    /// Exact for degree <= 2, alternating otherwise.
    Auto,
    /// SVD of the two-block matricization; degree 1 and 2 only.
    Exact2,
    /// Seeded multi-restart block alternating maximization.
    Alternating,
    /// Random unit tuples, each polished by alternating sweeps. Brute-force
    /// reference for cross-checking the alternating path.
    Oracle,
}

impl std::str::FromStr for NormMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(NormMethod::Auto),
            "exact2" => Ok(NormMethod::Exact2),
            "alternating" => Ok(NormMethod::Alternating),
            "oracle" => Ok(NormMethod::Oracle),
            other => Err(Error::Parse(format!(
                "unknown norm method `{other}` (expected auto, exact2, alternating, or oracle)"
            ))),
        }
    }
}

impl std::fmt::Display for NormMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            NormMethod::Auto => "auto",
            NormMethod::Exact2 => "exact2",
            NormMethod::Alternating => "alternating",
            NormMethod::Oracle => "oracle",
        };
        f.write_str(name)
    }
}

/// Tuning for the iterative methods. The defaults match the documented
/// behaviour of the CLI: 50 restarts, relative improvement threshold 1e-10,
/// at most 500 sweeps, 100000 oracle samples.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct NormConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub samples: usize,
    pub seed: u64,
    /// Consecutive zero-contraction re-randomizations tolerated before a
    /// restart is declared failed.
    pub rerandomize_limit: usize,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iters: 500,
            rel_tol: 1e-10,
            samples: 100_000,
            seed: 0,
            rerandomize_limit: 10,
        }
    }
}

/// Outcome of a norm computation. `witnesses` holds one unit vector per
/// block (in block order); evaluating the form at the witnesses reproduces
/// `value`, making the certificate checkable after the fact. `degenerate`
/// marks the all-zero array, where the witnesses are arbitrary unit vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormCertificate {
    pub value: f64,
    pub witnesses: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub degenerate: bool,
}

/// Precomputed index tables for one (array, partition) pair: for every flat
/// entry, its flattened position inside each block. Lets the hot loops run
/// without per-entry index arithmetic.
struct FormPlan {
    block_dims: Vec<usize>,
    block_codes: Vec<Vec<u32>>,
}

impl FormPlan {
    fn new(a: &MultiIndexArray, j: &Partition) -> Result<Self> {
        let d = a.order();
        let expected: Vec<usize> = (1..=d).collect();
        if j.ground() != expected.as_slice() {
            return Err(Error::InvalidPartition(format!(
                "partition {j} does not cover axes 1..={d}"
            )));
        }
        let mut axis_block = vec![0usize; d];
        let mut axis_stride = vec![0usize; d];
        let mut block_dims = Vec::with_capacity(j.degree());
        for (bi, block) in j.blocks().iter().enumerate() {
            let mut stride = 1usize;
            for &axis in block.iter().rev() {
                axis_stride[axis - 1] = stride;
                axis_block[axis - 1] = bi;
                stride = stride.checked_mul(a.shape()[axis - 1]).ok_or_else(
                    || Error::InvalidShape("block dimension overflows".into()),
                )?;
            }
            if stride > u32::MAX as usize {
                return Err(Error::InvalidShape(
                    "block dimension exceeds u32 indexing".into(),
                ));
            }
            block_dims.push(stride);
        }

        let mut block_codes =
            vec![vec![0u32; a.len()]; j.degree()];
        let mut index = vec![0usize; d];
        for flat in 0..a.len() {
            for (axis, &digit) in index.iter().enumerate() {
                block_codes[axis_block[axis]][flat] +=
                    (digit * axis_stride[axis]) as u32;
            }
            super::array::increment_index(&mut index, a.shape());
        }
        Ok(Self {
            block_dims,
            block_codes,
        })
    }

    fn degree(&self) -> usize {
        self.block_dims.len()
    }

    fn eval(&self, values: &[f64], witnesses: &[Vec<f64>]) -> f64 {
        let mut acc = CompensatedSum::new();
        for (e, &v) in values.iter().enumerate() {
            let mut prod = v;
            for (bi, w) in witnesses.iter().enumerate() {
                prod *= w[self.block_codes[bi][e] as usize];
            }
            acc.add(prod);
        }
        acc.value()
    }

    /// Contracts every block except `skip`, returning the gradient vector of
    /// the form with respect to that block's witness.
    fn contract_except(
        &self,
        values: &[f64],
        witnesses: &[Vec<f64>],
        skip: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; self.block_dims[skip]];
        let codes_skip = &self.block_codes[skip];
        for (e, &v) in values.iter().enumerate() {
            let mut prod = v;
            for (bi, w) in witnesses.iter().enumerate() {
                if bi != skip {
                    prod *= w[self.block_codes[bi][e] as usize];
                }
            }
            out[codes_skip[e] as usize] += prod;
        }
        out
    }

    fn random_witnesses(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        self.block_dims
            .iter()
            .map(|&dim| random_unit_vector(rng, dim))
            .collect()
    }
}

struct SweepOutcome {
    value: f64,
    witnesses: Vec<Vec<f64>>,
    iterations: usize,
    converged: bool,
}

/// Alternating maximization from a given starting tuple. Each sweep updates
/// every block once; a zero contraction re-randomizes that block vector.
fn alternate_from(
    plan: &FormPlan,
    values: &[f64],
    mut witnesses: Vec<Vec<f64>>,
    config: &NormConfig,
    rng: &mut ChaCha8Rng,
) -> SweepOutcome {
    let mut best_value = f64::NEG_INFINITY;
    let mut best_witnesses = witnesses.clone();
    let mut prev = f64::NEG_INFINITY;
    let mut consecutive_rerandomized = 0usize;
    for sweep in 1..=config.max_iters {
        let mut rerandomized = false;
        let mut last_norm = 0.0;
        for block in 0..plan.degree() {
            let c = plan.contract_except(values, &witnesses, block);
            let norm = numeric::l2_norm(&c);
            if norm == 0.0 {
                witnesses[block] =
                    random_unit_vector(rng, plan.block_dims[block]);
                rerandomized = true;
                consecutive_rerandomized += 1;
                if consecutive_rerandomized >= config.rerandomize_limit {
                    return SweepOutcome {
                        value: best_value.max(0.0),
                        witnesses: best_witnesses,
                        iterations: sweep,
                        converged: false,
                    };
                }
                continue;
            }
            consecutive_rerandomized = 0;
            witnesses[block] = c.iter().map(|x| x / norm).collect();
            last_norm = norm;
        }
        let value = last_norm;
        if value > best_value {
            best_value = value;
            best_witnesses = witnesses.clone();
        }
        if !rerandomized && prev.is_finite() {
            let improvement = value - prev;
            if improvement.abs() <= config.rel_tol * value.abs() {
                return SweepOutcome {
                    value: best_value,
                    witnesses: best_witnesses,
                    iterations: sweep,
                    converged: true,
                };
            }
        }
        prev = value;
    }
    SweepOutcome {
        value: best_value.max(0.0),
        witnesses: best_witnesses,
        iterations: config.max_iters,
        converged: false,
    }
}

fn certificate_from(outcome: SweepOutcome) -> NormCertificate {
    NormCertificate {
        value: outcome.value,
        witnesses: outcome.witnesses,
        converged: outcome.converged,
        iterations: outcome.iterations,
        degenerate: false,
    }
}

/// Picks the better of two candidate outcomes; ties resolve to the lower
/// index so parallel schedules cannot change the winner.
fn better(
    a: (usize, SweepOutcome),
    b: (usize, SweepOutcome),
) -> (usize, SweepOutcome) {
    if b.1.value > a.1.value || (b.1.value == a.1.value && b.0 < a.0) {
        b
    } else {
        a
    }
}

fn alternating_certificate(
    plan: &FormPlan,
    values: &[f64],
    config: &NormConfig,
) -> NormCertificate {
    let outcomes: Vec<SweepOutcome> = (0..config.restarts.max(1))
        .into_par_iter()
        .map(|restart| {
            let mut rng = derived_rng(config.seed, restart as u64);
            let start = plan.random_witnesses(&mut rng);
            alternate_from(plan, values, start, config, &mut rng)
        })
        .collect();
    let mut best: Option<(usize, SweepOutcome)> = None;
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        best = Some(match best {
            None => (idx, outcome),
            Some(cur) => better(cur, (idx, outcome)),
        });
    }
    certificate_from(best.expect("at least one restart").1)
}

const ORACLE_CHUNK: usize = 64;

fn oracle_certificate(
    plan: &FormPlan,
    values: &[f64],
    config: &NormConfig,
) -> NormCertificate {
    let samples = config.samples.max(1);
    let chunks = samples.div_ceil(ORACLE_CHUNK);
    let chunk_best: Vec<(usize, SweepOutcome)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * ORACLE_CHUNK;
            let hi = (lo + ORACLE_CHUNK).min(samples);
            let mut best: Option<(usize, SweepOutcome)> = None;
            for sample in lo..hi {
                let mut rng = derived_rng(config.seed, sample as u64);
                let start = plan.random_witnesses(&mut rng);
                let outcome =
                    alternate_from(plan, values, start, config, &mut rng);
                best = Some(match best {
                    None => (sample, outcome),
                    Some(cur) => better(cur, (sample, outcome)),
                });
            }
            best.expect("nonempty chunk")
        })
        .collect();
    let mut best: Option<(usize, SweepOutcome)> = None;
    for cand in chunk_best {
        best = Some(match best {
            None => cand,
            Some(cur) => better(cur, cand),
        });
    }
    certificate_from(best.expect("at least one sample").1)
}

fn frobenius_certificate(a: &MultiIndexArray) -> NormCertificate {
    let value = a.frobenius();
    let witness: Vec<f64> = a.values().iter().map(|v| v / value).collect();
    NormCertificate {
        value,
        witnesses: vec![witness],
        converged: true,
        iterations: 0,
        degenerate: false,
    }
}

fn svd_certificate(
    a: &MultiIndexArray,
    j: &Partition,
) -> Result<NormCertificate> {
    let m = matricize(a, &j.blocks()[0], &j.blocks()[1])?;
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let mat = nalgebra::DMatrix::from_row_slice(rows, cols, m.values());
    let svd = mat.svd(true, true);
    let (top, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (i, s))
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, s)| {
            if s > acc.1 {
                (i, s)
            } else {
                acc
            }
        });
    let value = svd.singular_values[top];
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let left: Vec<f64> = (0..rows).map(|r| u[(r, top)]).collect();
    let right: Vec<f64> = (0..cols).map(|c| v_t[(top, c)]).collect();
    Ok(NormCertificate {
        value,
        witnesses: vec![left, right],
        converged: true,
        iterations: 0,
        degenerate: false,
    })
}

fn degenerate_certificate(plan: &FormPlan) -> NormCertificate {
    let witnesses = plan
        .block_dims
        .iter()
        .map(|&dim| {
            let mut w = vec![0.0; dim];
            w[0] = 1.0;
            w
        })
        .collect();
    NormCertificate {
        value: 0.0,
        witnesses,
        converged: true,
        iterations: 0,
        degenerate: true,
    }
}

/// Computes the partition norm of `a` under `j`, which must partition all
/// axes of `a`. See [`NormMethod`] for the method semantics; the all-zero
/// array short-circuits to a degenerate certificate of value 0.
pub fn partition_norm(
    a: &MultiIndexArray,
    j: &Partition,
    method: NormMethod,
    config: &NormConfig,
) -> Result<NormCertificate> {
    let plan = FormPlan::new(a, j)?;
    if a.is_zero() {
        return Ok(degenerate_certificate(&plan));
    }
    match (method, j.degree()) {
        (_, 0) => unreachable!("arrays have order >= 1"),
        (NormMethod::Auto | NormMethod::Exact2, 1) => {
            Ok(frobenius_certificate(a))
        }
        (NormMethod::Auto | NormMethod::Exact2, 2) => svd_certificate(a, j),
        (NormMethod::Exact2, deg) => Err(Error::Unsupported(format!(
            "exact2 requires degree <= 2, partition {j} has degree {deg}"
        ))),
        (NormMethod::Alternating | NormMethod::Oracle, 1) => {
            Ok(frobenius_certificate(a))
        }
        (NormMethod::Auto | NormMethod::Alternating, _) => {
            Ok(alternating_certificate(&plan, a.values(), config))
        }
        (NormMethod::Oracle, _) => {
            Ok(oracle_certificate(&plan, a.values(), config))
        }
    }
}

/// Evaluates the multilinear form of `a` under partition `j` at the given
/// block vectors (one per block, in block order, flattened over the block's
/// axes ascending).
pub fn multilinear_eval(
    a: &MultiIndexArray,
    j: &Partition,
    witnesses: &[Vec<f64>],
) -> Result<f64> {
    let plan = FormPlan::new(a, j)?;
    if witnesses.len() != plan.degree() {
        return Err(Error::Mismatch(format!(
            "{} witnesses for a partition of degree {}",
            witnesses.len(),
            plan.degree()
        )));
    }
    for (bi, w) in witnesses.iter().enumerate() {
        if w.len() != plan.block_dims[bi] {
            return Err(Error::Mismatch(format!(
                "witness {bi} has length {}, block needs {}",
                w.len(),
                plan.block_dims[bi]
            )));
        }
    }
    Ok(plan.eval(a.values(), witnesses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rel_diff;

    fn identity2() -> MultiIndexArray {
        MultiIndexArray::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    /// Order-3 analogue of the identity: ones at (0,0,0) and (1,1,1).
    fn diag3() -> MultiIndexArray {
        MultiIndexArray::from_fn(vec![2, 2, 2], |ix| {
            if ix.iter().all(|&i| i == 0) || ix.iter().all(|&i| i == 1) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn identity_matrix_norms() {
        let a = identity2();
        let frob = partition_norm(
            &a,
            &Partition::parse("{1,2}").unwrap(),
            NormMethod::Auto,
            &NormConfig::default(),
        )
        .unwrap();
        assert!(rel_diff(frob.value, 2f64.sqrt()) < 1e-12);

        let spectral = partition_norm(
            &a,
            &Partition::parse("{1}|{2}").unwrap(),
            NormMethod::Exact2,
            &NormConfig::default(),
        )
        .unwrap();
        assert!(rel_diff(spectral.value, 1.0) < 1e-12);
    }

    #[test]
    fn diagonal_cube_norms() {
        let a = diag3();
        let config = NormConfig::default();
        for (spec, expected) in [
            ("{1}|{2}|{3}", 1.0),
            ("{1,2}|{3}", 1.0),
            ("{1,2,3}", 2f64.sqrt()),
        ] {
            let j = Partition::parse(spec).unwrap();
            let cert =
                partition_norm(&a, &j, NormMethod::Auto, &config).unwrap();
            assert!(
                rel_diff(cert.value, expected) < 1e-9,
                "{spec}: got {} want {expected}",
                cert.value
            );
        }
    }

    #[test]
    fn certificate_reproduces_value() {
        let a = diag3();
        let j = Partition::parse("{1}|{2}|{3}").unwrap();
        let cert = partition_norm(
            &a,
            &j,
            NormMethod::Alternating,
            &NormConfig::default(),
        )
        .unwrap();
        for w in &cert.witnesses {
            assert!((numeric::l2_norm(w) - 1.0).abs() < 1e-12);
        }
        let eval = multilinear_eval(&a, &j, &cert.witnesses).unwrap();
        assert!(rel_diff(eval, cert.value) < 1e-9);
    }

    #[test]
    fn zero_array_is_degenerate() {
        let a = MultiIndexArray::zeros(vec![2, 3]).unwrap();
        let cert = partition_norm(
            &a,
            &Partition::parse("{1}|{2}").unwrap(),
            NormMethod::Alternating,
            &NormConfig::default(),
        )
        .unwrap();
        assert_eq!(cert.value, 0.0);
        assert!(cert.converged);
        assert!(cert.degenerate);
        for w in &cert.witnesses {
            assert!((numeric::l2_norm(w) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact2_rejects_high_degree() {
        let a = diag3();
        let err = partition_norm(
            &a,
            &Partition::parse("{1}|{2}|{3}").unwrap(),
            NormMethod::Exact2,
            &NormConfig::default(),
        );
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn restart_merge_is_order_independent() {
        // Same seed, different thread pools, identical certificate.
        let a = diag3();
        let j = Partition::parse("{1}|{2}|{3}").unwrap();
        let config = NormConfig {
            restarts: 16,
            ..NormConfig::default()
        };
        let base =
            partition_norm(&a, &j, NormMethod::Alternating, &config).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let serial = pool.install(|| {
            partition_norm(&a, &j, NormMethod::Alternating, &config).unwrap()
        });
        assert_eq!(base.value.to_bits(), serial.value.to_bits());
        assert_eq!(base.witnesses, serial.witnesses);
    }
}
