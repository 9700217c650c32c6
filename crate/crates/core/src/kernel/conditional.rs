//! Conditional partition norms over a free axis set I.
//!
//! Fixing the coordinates on the complement I^c (an outcome per index and
//! conditioned axis) leaves a family of functions of the free coordinates.
//! Its partition norm under a partition J of I is a supremum over block
//! functions with unit second moment; on finite spaces that supremum equals
//! the partition norm of a finite array, obtained by scaling the table entry
//! for (index, atom) on each free axis by sqrt(prob). The embedding makes
//! the norm exact rather than sampled.
//!
//! Bound evaluators need two reductions of the conditional norm: its
//! expectation of the max over the free outer indices (moment bounds) and
//! its essential supremum (tail bounds). Both enumerate or sample the
//! conditioning outcomes through a cache of norms, one entry per (outer
//! index tuple, atoms at those positions), since the embedded array depends
//! on the assignment only through the atoms actually selected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::ensemble::flatten;
use crate::kernel::KernelEnsemble;
use crate::montecarlo::stream;
use crate::numeric::CompensatedSum;
use crate::tensor::{
    increment_index, partition_norm, MultiIndexArray, NormCertificate,
    NormConfig, NormMethod, Partition,
};

/// One atom per (conditioned axis, index): a full realization of the
/// variables on the axes in `axes`. Axes are 1-based and sorted;
/// `atoms[k][i]` is the atom of axis `axes[k]` at index `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct OutcomeAssignment {
    pub axes: Vec<usize>,
    pub atoms: Vec<Vec<usize>>,
}

impl OutcomeAssignment {
    pub fn new(axes: Vec<usize>, atoms: Vec<Vec<usize>>) -> Result<Self> {
        if axes.len() != atoms.len() {
            return Err(Error::Mismatch(format!(
                "{} axes but {} atom rows",
                axes.len(),
                atoms.len()
            )));
        }
        if axes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "assignment axes must be strictly increasing".into(),
            ));
        }
        Ok(Self { axes, atoms })
    }

    pub fn empty() -> Self {
        Self {
            axes: Vec::new(),
            atoms: Vec::new(),
        }
    }

    fn validate_for(&self, k: &KernelEnsemble) -> Result<()> {
        for (pos, &axis) in self.axes.iter().enumerate() {
            if axis == 0 || axis > k.d() {
                return Err(Error::InvalidArgument(format!(
                    "assignment axis {axis} outside 1..={}",
                    k.d()
                )));
            }
            if self.atoms[pos].len() != k.n() {
                return Err(Error::Mismatch(format!(
                    "assignment for axis {axis} has {} entries, n = {}",
                    self.atoms[pos].len(),
                    k.n()
                )));
            }
            let m = k.atom_counts()[axis - 1];
            if self.atoms[pos].iter().any(|&a| a >= m) {
                return Err(Error::InvalidArgument(format!(
                    "atom id out of range on axis {axis}"
                )));
            }
        }
        Ok(())
    }
}

/// Checks that `i_set` is a nonempty strictly increasing subset of 1..=d and
/// returns (free axes, conditioned axes), both 0-based ascending.
fn split_axes(k: &KernelEnsemble, i_set: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if i_set.is_empty() {
        return Err(Error::InvalidArgument(
            "the empty axis set has no embedding; bound evaluators handle \
             it through the scalar |h| convention"
                .into(),
        ));
    }
    if i_set.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "axis set must be strictly increasing".into(),
        ));
    }
    if i_set[0] == 0 || *i_set.last().unwrap() > k.d() {
        return Err(Error::InvalidArgument(format!(
            "axis set {i_set:?} outside 1..={}",
            k.d()
        )));
    }
    let free: Vec<usize> = i_set.iter().map(|&ax| ax - 1).collect();
    let outer: Vec<usize> =
        (0..k.d()).filter(|ax| !free.contains(ax)).collect();
    Ok((free, outer))
}

/// Embedded array at an explicit conditioning: `outer_atoms[k]` is the atom
/// frozen on conditioned axis `outer_axes[k]` (0-based) whose index is
/// `i_outer[k]`. One output axis per free axis, of size n * m, flattened
/// index-major: position i * m + a.
fn embedding_at(
    k: &KernelEnsemble,
    free: &[usize],
    outer: &[usize],
    i_outer: &[usize],
    outer_atoms: &[usize],
) -> Result<MultiIndexArray> {
    let shape: Vec<usize> = free
        .iter()
        .map(|&ax| k.n() * k.atom_counts()[ax])
        .collect();
    let mut i_full = vec![0usize; k.d()];
    let mut a_full = vec![0usize; k.d()];
    for (pos, &ax) in outer.iter().enumerate() {
        i_full[ax] = i_outer[pos];
        a_full[ax] = outer_atoms[pos];
    }
    MultiIndexArray::from_fn(shape, |q| {
        let mut weight = 1.0;
        for (pos, &ax) in free.iter().enumerate() {
            let m = k.atom_counts()[ax];
            let i = q[pos] / m;
            let a = q[pos] % m;
            i_full[ax] = i;
            a_full[ax] = a;
            weight *= k.space(ax, i).prob(a).sqrt();
        }
        k.value(&i_full, &a_full) * weight
    })
}

/// Weighted embedding of the kernels over the free axes `i_set` (1-based),
/// conditioned on outcome `w` with the outer indices pinned at `i_outer`
/// (0-based, one per conditioned axis ascending). Entry ((i_l, a_l)_{l in I})
/// holds h_i(a) * prod sqrt(p^(l)_{i_l, a_l}); partition norms of this array
/// are the conditional norms.
pub fn weighted_embedding(
    k: &KernelEnsemble,
    i_set: &[usize],
    i_outer: &[usize],
    w: &OutcomeAssignment,
) -> Result<MultiIndexArray> {
    let (free, outer) = split_axes(k, i_set)?;
    w.validate_for(k)?;
    let expected_axes: Vec<usize> = outer.iter().map(|&ax| ax + 1).collect();
    if w.axes != expected_axes {
        return Err(Error::Mismatch(format!(
            "assignment covers axes {:?}, complement of I is {:?}",
            w.axes, expected_axes
        )));
    }
    if i_outer.len() != outer.len() {
        return Err(Error::Mismatch(format!(
            "{} outer indices for {} conditioned axes",
            i_outer.len(),
            outer.len()
        )));
    }
    if i_outer.iter().any(|&i| i >= k.n()) {
        return Err(Error::InvalidArgument(
            "outer index out of range".into(),
        ));
    }
    let outer_atoms: Vec<usize> = outer
        .iter()
        .enumerate()
        .map(|(pos, _)| w.atoms[pos][i_outer[pos]])
        .collect();
    embedding_at(k, &free, &outer, i_outer, &outer_atoms)
}

/// Relabels a partition of kernel axes (ground = I) to embedding axes
/// (1..=|I| in the same order).
fn remap_partition(j: &Partition) -> Result<Partition> {
    let ground = j.ground();
    let rank = |axis: usize| {
        ground.iter().position(|&g| g == axis).expect("axis in ground") + 1
    };
    Partition::new(
        j.blocks()
            .iter()
            .map(|b| b.iter().map(|&ax| rank(ax)).collect())
            .collect(),
    )
}

/// Conditional partition norm at one conditioning. `j` partitions the free
/// axis set I = ground(j) in kernel labels.
pub fn conditional_partition_norm(
    k: &KernelEnsemble,
    j: &Partition,
    i_outer: &[usize],
    w: &OutcomeAssignment,
    method: NormMethod,
    config: &NormConfig,
) -> Result<NormCertificate> {
    let embedded = weighted_embedding(k, j.ground(), i_outer, w)?;
    partition_norm(&embedded, &remap_partition(j)?, method, config)
}

/// How the expectation over conditioning outcomes is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EvaluationMode {
    /// Full enumeration of the joint outcomes (budget-gated).
    Exact,
    /// Seeded sampling of the joint outcomes.
    MonteCarlo { samples: u64, seed: u64 },
}

/// Norms indexed by (outer index tuple, atoms at those positions). The
/// conditional norm depends on the assignment only through the atoms at the
/// pinned outer indices, so this cache covers every reachable conditioning.
struct NormCache {
    outer: Vec<usize>,
    local_dims: Vec<usize>,
    local_block: usize,
    values: Vec<f64>,
}

impl NormCache {
    fn lookup(&self, i_outer_flat: usize, atom_flat: usize) -> f64 {
        self.values[i_outer_flat * self.local_block + atom_flat]
    }
}

fn build_cache(
    k: &KernelEnsemble,
    j: &Partition,
    method: NormMethod,
    config: &NormConfig,
    budget: u64,
) -> Result<NormCache> {
    let i_set = j.ground();
    let (free, outer) = if i_set.is_empty() {
        (Vec::new(), (0..k.d()).collect::<Vec<usize>>())
    } else {
        split_axes(k, i_set)?
    };
    let local_dims: Vec<usize> =
        outer.iter().map(|&ax| k.atom_counts()[ax]).collect();
    let local_block: usize = local_dims.iter().product();
    let outer_tuples = (k.n() as u128).pow(outer.len() as u32);
    let cache_size = outer_tuples * local_block as u128;
    if cache_size > budget as u128 {
        return Err(Error::BudgetExceeded {
            states: cache_size,
            budget: budget as u128,
        });
    }
    let outer_tuples = outer_tuples as usize;
    let remapped = if i_set.is_empty() {
        None
    } else {
        Some(remap_partition(j)?)
    };

    let outer_dims = vec![k.n(); outer.len()];
    let mut values = Vec::with_capacity(outer_tuples * local_block);
    let mut i_outer = vec![0usize; outer.len()];
    for _ in 0..outer_tuples {
        let mut atoms = vec![0usize; outer.len()];
        for _ in 0..local_block.max(1) {
            let value = match &remapped {
                Some(jr) => {
                    let embedded =
                        embedding_at(k, &free, &outer, &i_outer, &atoms)?;
                    partition_norm(&embedded, jr, method, config)?.value
                }
                None => {
                    // I = ∅: the "norm" of the fully evaluated kernel is its
                    // absolute value.
                    let idx = flatten(&i_outer, &vec![k.n(); k.d()]);
                    let atom = flatten(&atoms, k.atom_counts());
                    k.kernel_slice(idx)[atom].abs()
                }
            };
            values.push(value);
            increment_index(&mut atoms, &local_dims);
        }
        increment_index(&mut i_outer, &outer_dims);
    }
    Ok(NormCache {
        outer,
        local_dims,
        local_block: local_block.max(1),
        values,
    })
}

/// Digit layout for a joint conditioning outcome: axis-major, then index.
/// digit (pos, i) is the atom of conditioned axis `outer[pos]` at index i.
fn state_max_pow(
    cache: &NormCache,
    k: &KernelEnsemble,
    digits: &[usize],
    p: f64,
) -> f64 {
    let n = k.n();
    let outer_len = cache.outer.len();
    let mut best = f64::NEG_INFINITY;
    let mut i_outer = vec![0usize; outer_len];
    let outer_dims = vec![n; outer_len];
    let tuples = n.pow(outer_len as u32);
    for _ in 0..tuples {
        let mut atom_flat = 0usize;
        for pos in 0..outer_len {
            let atom = digits[pos * n + i_outer[pos]];
            atom_flat = atom_flat * cache.local_dims[pos] + atom;
        }
        let v = cache.lookup(flatten(&i_outer, &outer_dims), atom_flat);
        if v > best {
            best = v;
        }
        increment_index(&mut i_outer, &outer_dims);
    }
    best.powf(p)
}

/// E max over outer index tuples of the conditional norm raised to `p`.
/// For I = ground(j) equal to all axes there is nothing to condition on and
/// both modes return the deterministic norm^p with no standard error; the
/// Monte Carlo estimate otherwise carries its standard error.
pub fn expected_max_conditional_norm(
    k: &KernelEnsemble,
    j: &Partition,
    p: f64,
    mode: EvaluationMode,
    method: NormMethod,
    config: &NormConfig,
    budget: u64,
) -> Result<(f64, Option<f64>)> {
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "moment order p = {p} must be positive"
        )));
    }
    let full: Vec<usize> = (1..=k.d()).collect();
    if j.ground() == full.as_slice() {
        let cert = conditional_partition_norm(
            k,
            j,
            &[],
            &OutcomeAssignment::empty(),
            method,
            config,
        )?;
        return Ok((cert.value.powf(p), None));
    }
    let cache = build_cache(k, j, method, config, budget)?;
    let n = k.n();
    let local_sizes: Vec<usize> = cache
        .outer
        .iter()
        .flat_map(|&ax| std::iter::repeat(k.atom_counts()[ax]).take(n))
        .collect();

    match mode {
        EvaluationMode::Exact => {
            let states: u128 = local_sizes
                .iter()
                .try_fold(1u128, |acc, &m| acc.checked_mul(m as u128))
                .ok_or_else(|| Error::BudgetExceeded {
                    states: u128::MAX,
                    budget: budget as u128,
                })?;
            if states > budget as u128 {
                return Err(Error::BudgetExceeded {
                    states,
                    budget: budget as u128,
                });
            }
            let mut acc = CompensatedSum::new();
            let mut digits = vec![0usize; local_sizes.len()];
            for _ in 0..states {
                let mut weight = 1.0;
                for (pos, &ax) in cache.outer.iter().enumerate() {
                    for i in 0..n {
                        weight *=
                            k.space(ax, i).prob(digits[pos * n + i]);
                    }
                }
                if weight > 0.0 {
                    acc.add(weight * state_max_pow(&cache, k, &digits, p));
                }
                increment_index(&mut digits, &local_sizes);
            }
            Ok((acc.value(), None))
        }
        EvaluationMode::MonteCarlo { samples, seed } => {
            let summary = stream::sample_mean(seed, samples, |rng| {
                let digits: Vec<usize> = cache
                    .outer
                    .iter()
                    .flat_map(|&ax| {
                        (0..n)
                            .map(|i| k.space(ax, i).sample(rng))
                            .collect::<Vec<usize>>()
                    })
                    .collect();
                state_max_pow(&cache, k, &digits, p)
            });
            Ok((summary.mean, Some(summary.se)))
        }
    }
}

/// Essential supremum of the conditional norm over all conditioning
/// outcomes and outer index tuples. Deterministic: the reachable set is the
/// finite cache.
pub fn sup_conditional_norm(
    k: &KernelEnsemble,
    j: &Partition,
    method: NormMethod,
    config: &NormConfig,
    budget: u64,
) -> Result<f64> {
    if j.ground().is_empty() {
        return Ok(k.sup_abs());
    }
    let full: Vec<usize> = (1..=k.d()).collect();
    if j.ground() == full.as_slice() {
        let cert = conditional_partition_norm(
            k,
            j,
            &[],
            &OutcomeAssignment::empty(),
            method,
            config,
        )?;
        return Ok(cert.value);
    }
    let cache = build_cache(k, j, method, config, budget)?;
    Ok(cache.values.iter().fold(0.0f64, |acc, &v| acc.max(v)))
}
