//! Seeded draws of the statistic and of Gaussian chaoses.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::{gaussian_matrix_rhs, ChaosTerm};
use crate::kernel::KernelEnsemble;
use crate::montecarlo::summary::{run_summaries, SampleRun, SummarySpec};
use crate::numeric::{l2_norm, CompensatedSum};
use crate::tensor::{
    partition_norm, MultiIndexArray, NormConfig, NormMethod, Partition,
};
use crate::{Error, Result};

/// One draw of Z: fresh coordinates for every axis/index slot, then the sum
/// of kernel values over all index tuples.
fn draw_statistic(k: &KernelEnsemble, rng: &mut ChaCha8Rng) -> f64 {
    let d = k.d();
    let n = k.n();
    // Axis-major, index-minor consumption order; fixed so that runs with
    // the same seed agree regardless of how the value is folded below.
    let mut atoms = vec![vec![0usize; n]; d];
    for (axis, row) in atoms.iter_mut().enumerate() {
        for (index, slot) in row.iter_mut().enumerate() {
            *slot = k.space(axis, index).sample(rng);
        }
    }
    let index_dims = k.index_dims();
    let tuples = (n as u64).pow(d as u32);
    let mut idx = vec![0usize; d];
    let mut a = vec![0usize; d];
    let mut total = CompensatedSum::new();
    for _ in 0..tuples {
        for j in 0..d {
            a[j] = atoms[j][idx[j]];
        }
        total.add(k.value(&idx, &a));
        crate::tensor::increment_index(&mut idx, &index_dims);
    }
    total.value()
}

/// Samples the statistic of `k` and summarizes per `spec`.
pub fn sample_ustatistic(
    k: &KernelEnsemble,
    seed: u64,
    samples: u64,
    spec: &SummarySpec,
) -> SampleRun {
    run_summaries(seed, samples, spec, |rng| draw_statistic(k, rng))
}

/// One draw of the chaos sum_i a_i * g^(1)_{i_1} ... g^(d)_{i_d} with
/// independent standard Gaussian vectors per axis.
fn draw_chaos(a: &MultiIndexArray, rng: &mut ChaCha8Rng) -> f64 {
    let d = a.order();
    let shape = a.shape();
    let mut g: Vec<Vec<f64>> = Vec::with_capacity(d);
    for &dim in shape {
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            let x: f64 = StandardNormal.sample(rng);
            v.push(x);
        }
        g.push(v);
    }
    let mut idx = vec![0usize; d];
    let mut total = CompensatedSum::new();
    for &value in a.values() {
        let mut term = value;
        for (j, &i) in idx.iter().enumerate() {
            term *= g[j][i];
        }
        total.add(term);
        crate::tensor::increment_index(&mut idx, shape);
    }
    total.value()
}

/// Samples the decoupled Gaussian chaos of `a` and summarizes per `spec`.
pub fn sample_gaussian_chaos(
    a: &MultiIndexArray,
    seed: u64,
    samples: u64,
    spec: &SummarySpec,
) -> SampleRun {
    run_summaries(seed, samples, spec, |rng| draw_chaos(a, rng))
}

/// Empirical check of the random-contraction estimate: the mean norm of
/// the array contracted with a Gaussian vector on its last axis, against
/// the closed-form right-hand side at the same order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatrixNormCheck {
    pub p: f64,
    pub samples: u64,
    pub seed: u64,
    /// Estimate of E || sum_j g_j A(.., j) || over the remaining axes.
    pub empirical: f64,
    pub se: f64,
    pub rhs_terms: Vec<ChaosTerm>,
    pub rhs: f64,
    pub ratio: f64,
}

/// Norm of the contracted array over the remaining d-1 axes with every
/// axis its own block. Exact for one or two remaining axes.
fn contracted_norm(
    shape: &[usize],
    b: &[f64],
    method: NormMethod,
    config: &NormConfig,
) -> Result<f64> {
    match shape.len() {
        1 => Ok(l2_norm(b)),
        2 => {
            let m = DMatrix::from_row_slice(shape[0], shape[1], b);
            let svd = m.svd(false, false);
            Ok(svd
                .singular_values
                .iter()
                .fold(0.0f64, |acc, &s| acc.max(s)))
        }
        _ => {
            let arr = MultiIndexArray::new(shape.to_vec(), b.to_vec())?;
            let ground: Vec<usize> = (1..=shape.len()).collect();
            let j = Partition::singletons(&ground)?;
            let method = match method {
                NormMethod::Auto | NormMethod::Exact2 => {
                    NormMethod::Alternating
                }
                other => other,
            };
            Ok(partition_norm(&arr, &j, method, config)?.value)
        }
    }
}

/// Monte Carlo mean of the contracted-array norm next to its closed-form
/// estimate at order `p`.
pub fn gaussian_matrix_norm_check(
    a: &MultiIndexArray,
    p: f64,
    seed: u64,
    samples: u64,
    method: NormMethod,
    config: &NormConfig,
) -> Result<MatrixNormCheck> {
    if a.order() < 2 {
        return Err(Error::InvalidArgument(
            "matrix norm check needs an array of order at least 2".into(),
        ));
    }
    let shape = a.shape().to_vec();
    let d = shape.len();
    let last = shape[d - 1];
    let lead = shape[..d - 1].to_vec();
    let rows: usize = lead.iter().product();
    let values = a.values();
    let run = crate::montecarlo::stream::sample_mean(seed, samples, |rng| {
        let mut g = Vec::with_capacity(last);
        for _ in 0..last {
            let x: f64 = StandardNormal.sample(rng);
            g.push(x);
        }
        let mut b = vec![0.0f64; rows];
        for (r, slot) in b.iter_mut().enumerate() {
            let mut acc = CompensatedSum::new();
            for (j, &gj) in g.iter().enumerate() {
                acc.add(values[r * last + j] * gj);
            }
            *slot = acc.value();
        }
        contracted_norm(&lead, &b, method, config)
            .expect("contracted norm on validated shape")
    });
    let (rhs_terms, rhs) = gaussian_matrix_rhs(a, p, method, config)?;
    let ratio = if rhs > 0.0 {
        run.mean / rhs
    } else if run.mean == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MatrixNormCheck {
        p,
        samples,
        seed,
        empirical: run.mean,
        se: run.se,
        rhs_terms,
        rhs,
        ratio,
    })
}
