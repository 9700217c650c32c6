//! Exact law of the statistic by enumerating all coordinate outcomes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::kernel::KernelEnsemble;
use crate::numeric::CompensatedSum;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SupportPoint {
    pub value: f64,
    pub prob: f64,
}

/// Full distribution of Z on a finite outcome space, support ascending.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExactDistribution {
    pub support: Vec<SupportPoint>,
}

/// Enumerates every assignment of atoms to the d*n coordinate slots and
/// folds the statistic's values into a distribution. The state count is
/// prod_axis m_axis^n and must stay within `budget`.
pub fn exact_distribution(
    k: &KernelEnsemble,
    budget: u64,
) -> Result<ExactDistribution> {
    let d = k.d();
    let n = k.n();
    // One digit per (axis, index) slot, axis-major then index, matching
    // the sampling order used elsewhere.
    let mut dims = Vec::with_capacity(d * n);
    for ax in 0..d {
        for _ in 0..n {
            dims.push(k.atom_counts()[ax]);
        }
    }
    let states: u128 = dims
        .iter()
        .try_fold(1u128, |acc, &m| acc.checked_mul(m as u128))
        .ok_or(Error::BudgetExceeded {
            states: u128::MAX,
            budget: budget as u128,
        })?;
    if states > budget as u128 {
        return Err(Error::BudgetExceeded {
            states,
            budget: budget as u128,
        });
    }

    let index_dims = k.index_dims();
    let tuples: u64 = (n as u64).pow(d as u32);
    let mut digits = vec![0usize; d * n];
    let mut groups: HashMap<u64, CompensatedSum> = HashMap::new();
    for _ in 0..states {
        let mut weight = 1.0;
        for ax in 0..d {
            for i in 0..n {
                weight *= k.space(ax, i).prob(digits[ax * n + i]);
            }
        }
        if weight > 0.0 {
            let mut idx = vec![0usize; d];
            let mut a = vec![0usize; d];
            let mut total = CompensatedSum::new();
            for _ in 0..tuples {
                for j in 0..d {
                    a[j] = digits[j * n + idx[j]];
                }
                total.add(k.value(&idx, &a));
                crate::tensor::increment_index(&mut idx, &index_dims);
            }
            // +0.0 folds -0.0 into the same group as 0.0.
            let z = total.value() + 0.0;
            groups.entry(z.to_bits()).or_default().add(weight);
        }
        crate::tensor::increment_index(&mut digits, &dims);
    }

    let mut support: Vec<SupportPoint> = groups
        .into_iter()
        .map(|(bits, prob)| SupportPoint {
            value: f64::from_bits(bits),
            prob: prob.value(),
        })
        .collect();
    support.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(ExactDistribution { support })
}

impl ExactDistribution {
    pub fn mean(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for pt in &self.support {
            acc.add(pt.value * pt.prob);
        }
        acc.value()
    }

    /// E |Z|^p.
    pub fn abs_moment(&self, p: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        for pt in &self.support {
            acc.add(pt.value.abs().powf(p) * pt.prob);
        }
        acc.value()
    }

    /// P(|Z| >= t).
    pub fn tail(&self, t: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        for pt in &self.support {
            if pt.value.abs() >= t {
                acc.add(pt.prob);
            }
        }
        acc.value()
    }

    pub fn total_prob(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for pt in &self.support {
            acc.add(pt.prob);
        }
        acc.value()
    }
}
