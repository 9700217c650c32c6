//! Kernel ensembles and the canonical (completely degenerate) projection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::DiscreteSpace;
use crate::numeric::{self, CompensatedSum};
use crate::rng::derived_rng;

/// Default tolerance for the per-coordinate degeneracy check.
pub const CANONICAL_TOL: f64 = 1e-10;

/// A family of kernels h_i, one per index tuple i in {0..n-1}^d, each a real
/// table over the atom tuples of its axes. The space on axis j may differ
/// across indices i (only the probabilities; the atom count m_j is fixed per
/// axis so the table stays rectangular).
///
/// Table layout: index-major then atom-major, both row-major with axis 1
/// most significant. The value of h_i at atoms a sits at
/// `flat(i; [n]*d) * prod(m) + flat(a; m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleRepr", into = "EnsembleRepr")]
pub struct KernelEnsemble {
    d: usize,
    n: usize,
    spaces: Vec<DiscreteSpace>,
    space_refs: Vec<Vec<usize>>,
    atom_counts: Vec<usize>,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct EnsembleRepr {
    d: usize,
    n: usize,
    /// Pool of distinct spaces; `space_refs[j][i]` picks the space of axis
    /// j+1 at index i.
    spaces: Vec<DiscreteSpace>,
    space_refs: Vec<Vec<usize>>,
    table: Vec<f64>,
}

impl TryFrom<EnsembleRepr> for KernelEnsemble {
    type Error = Error;

    fn try_from(repr: EnsembleRepr) -> Result<Self> {
        KernelEnsemble::new(
            repr.d,
            repr.n,
            repr.spaces,
            repr.space_refs,
            repr.table,
        )
    }
}

impl From<KernelEnsemble> for EnsembleRepr {
    fn from(k: KernelEnsemble) -> Self {
        EnsembleRepr {
            d: k.d,
            n: k.n,
            spaces: k.spaces,
            space_refs: k.space_refs,
            table: k.table,
        }
    }
}

pub(crate) fn flatten(digits: &[usize], dims: &[usize]) -> usize {
    digits
        .iter()
        .zip(dims)
        .fold(0usize, |acc, (&digit, &dim)| acc * dim + digit)
}

impl KernelEnsemble {
    pub fn new(
        d: usize,
        n: usize,
        spaces: Vec<DiscreteSpace>,
        space_refs: Vec<Vec<usize>>,
        table: Vec<f64>,
    ) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::InvalidArgument(
                "kernel ensembles need d >= 1 and n >= 1".into(),
            ));
        }
        if space_refs.len() != d {
            return Err(Error::Mismatch(format!(
                "spaceRefs has {} axes, d = {d}",
                space_refs.len()
            )));
        }
        let mut atom_counts = Vec::with_capacity(d);
        for (axis, refs) in space_refs.iter().enumerate() {
            if refs.len() != n {
                return Err(Error::Mismatch(format!(
                    "spaceRefs[{axis}] has {} entries, n = {n}",
                    refs.len()
                )));
            }
            let mut m = None;
            for &r in refs {
                let space = spaces.get(r).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "space reference {r} out of range"
                    ))
                })?;
                match m {
                    None => m = Some(space.len()),
                    Some(prev) if prev != space.len() => {
                        return Err(Error::Mismatch(format!(
                            "axis {} mixes atom counts {prev} and {}",
                            axis + 1,
                            space.len()
                        )));
                    }
                    _ => {}
                }
            }
            atom_counts.push(m.expect("n >= 1"));
        }
        let idx_count = numeric::checked_product(&vec![n; d])
            .ok_or_else(|| Error::InvalidShape("n^d overflows".into()))?;
        let atom_block = numeric::checked_product(&atom_counts)
            .ok_or_else(|| Error::InvalidShape("atom block overflows".into()))?;
        let expected = idx_count.checked_mul(atom_block).ok_or_else(|| {
            Error::InvalidShape("kernel table size overflows".into())
        })?;
        if table.len() != expected {
            return Err(Error::Mismatch(format!(
                "table has {} values, expected n^d * prod(m) = {expected}",
                table.len()
            )));
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite kernel value".into(),
            ));
        }
        Ok(Self {
            d,
            n,
            spaces,
            space_refs,
            atom_counts,
            table,
        })
    }

    /// Ensemble sharing one space and one kernel table across all axes and
    /// indices.
    pub fn iid(
        d: usize,
        n: usize,
        space: DiscreteSpace,
        kernel: Vec<f64>,
    ) -> Result<Self> {
        let m = space.len();
        let atom_block = numeric::checked_product(&vec![m; d])
            .ok_or_else(|| Error::InvalidShape("m^d overflows".into()))?;
        if kernel.len() != atom_block {
            return Err(Error::Mismatch(format!(
                "kernel table has {} values, expected m^d = {atom_block}",
                kernel.len()
            )));
        }
        let idx_count = n.pow(d as u32);
        let mut table = Vec::with_capacity(idx_count * atom_block);
        for _ in 0..idx_count {
            table.extend_from_slice(&kernel);
        }
        Self::new(d, n, vec![space], vec![vec![0; n]; d], table)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn atom_counts(&self) -> &[usize] {
        &self.atom_counts
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Space of axis `axis` (0-based) at index `index` (0-based).
    pub fn space(&self, axis: usize, index: usize) -> &DiscreteSpace {
        &self.spaces[self.space_refs[axis][index]]
    }

    pub fn index_dims(&self) -> Vec<usize> {
        vec![self.n; self.d]
    }

    fn atom_block(&self) -> usize {
        self.atom_counts.iter().product()
    }

    /// Kernel value h_i(a); i and a are 0-based tuples of length d.
    pub fn value(&self, i: &[usize], a: &[usize]) -> f64 {
        let idx = flatten(i, &self.index_dims());
        let atom = flatten(a, &self.atom_counts);
        self.table[idx * self.atom_block() + atom]
    }

    pub(crate) fn kernel_slice(&self, idx_flat: usize) -> &[f64] {
        let block = self.atom_block();
        &self.table[idx_flat * block..(idx_flat + 1) * block]
    }

    /// Largest |h_i(a)| over all indices and atoms.
    pub fn sup_abs(&self) -> f64 {
        self.table.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::InvalidArgument("non-finite scale".into()));
        }
        let mut out = self.clone();
        for v in &mut out.table {
            *v *= c;
        }
        Ok(out)
    }

    /// Applies the degeneracy projection (Id - E_1)...(Id - E_d) to every
    /// kernel, where E_j integrates coordinate j against the space of axis j
    /// at index i_j. The factors commute, and the result is canonical up to
    /// floating-point roundoff; applying it twice is an identity to the same
    /// accuracy.
    pub fn canonicalize(&self) -> Self {
        let mut out = self.clone();
        let block = self.atom_block();
        let atom_strides = strides_of(&self.atom_counts);
        let idx_dims = self.index_dims();
        let idx_count: usize = idx_dims.iter().product();
        let mut idx = vec![0usize; self.d];
        for idx_flat in 0..idx_count {
            let base = idx_flat * block;
            for axis in 0..self.d {
                let probs = self.space(axis, idx[axis]).probs();
                let m = self.atom_counts[axis];
                let stride = atom_strides[axis];
                // Center every line along `axis` of the atom block.
                for rest in 0..block / m {
                    let offset =
                        (rest / stride) * stride * m + (rest % stride);
                    let mut mean = CompensatedSum::new();
                    for atom in 0..m {
                        mean.add(
                            probs[atom]
                                * out.table[base + offset + atom * stride],
                        );
                    }
                    let mean = mean.value();
                    for atom in 0..m {
                        out.table[base + offset + atom * stride] -= mean;
                    }
                }
            }
            crate::tensor::increment_index(&mut idx, &idx_dims);
        }
        out
    }

    /// Worst conditional-mean deviation over all (axis, index tuple, frozen
    /// coordinates). Returns (deviation, axis, flat index-tuple id), with
    /// axis 1-based.
    pub fn canonicality_deviation(&self) -> (f64, usize, usize) {
        let block = self.atom_block();
        let atom_strides = strides_of(&self.atom_counts);
        let idx_dims = self.index_dims();
        let idx_count: usize = idx_dims.iter().product();
        let mut worst = (0.0f64, 1usize, 0usize);
        let mut idx = vec![0usize; self.d];
        for idx_flat in 0..idx_count {
            let base = idx_flat * block;
            for axis in 0..self.d {
                let probs = self.space(axis, idx[axis]).probs();
                let m = self.atom_counts[axis];
                let stride = atom_strides[axis];
                for rest in 0..block / m {
                    let offset =
                        (rest / stride) * stride * m + (rest % stride);
                    let mut mean = CompensatedSum::new();
                    for atom in 0..m {
                        mean.add(
                            probs[atom]
                                * self.table[base + offset + atom * stride],
                        );
                    }
                    let dev = mean.value().abs();
                    if dev > worst.0 {
                        worst = (dev, axis + 1, idx_flat);
                    }
                }
            }
            crate::tensor::increment_index(&mut idx, &idx_dims);
        }
        worst
    }

    pub fn is_canonical(&self, tol: f64) -> bool {
        self.canonicality_deviation().0 <= tol
    }

    /// Errors with the offending location unless the ensemble is canonical.
    pub fn require_canonical(&self, tol: f64) -> Result<()> {
        let (deviation, axis, index) = self.canonicality_deviation();
        if deviation > tol {
            return Err(Error::NotCanonical {
                axis,
                index,
                deviation,
                tol,
            });
        }
        Ok(())
    }
}

pub(crate) fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for axis in (0..dims.len().saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * dims[axis + 1];
    }
    strides
}

/// Compact form for the i.i.d. case: one space, one kernel table shared by
/// every index tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct SharedKernel {
    pub d: usize,
    pub n: usize,
    pub space: DiscreteSpace,
    pub kernel_table: Vec<f64>,
}

impl SharedKernel {
    pub fn new(
        d: usize,
        n: usize,
        space: DiscreteSpace,
        kernel_table: Vec<f64>,
    ) -> Result<Self> {
        // Expansion validates the table length against m^d.
        let shared = Self {
            d,
            n,
            space,
            kernel_table,
        };
        shared.expand()?;
        Ok(shared)
    }

    /// Full ensemble with h_i = h for all i in {0..n-1}^d.
    pub fn expand(&self) -> Result<KernelEnsemble> {
        KernelEnsemble::iid(
            self.d,
            self.n,
            self.space.clone(),
            self.kernel_table.clone(),
        )
    }

    /// Single-index ensemble carrying just the kernel itself.
    pub fn unit_ensemble(&self) -> Result<KernelEnsemble> {
        KernelEnsemble::iid(
            self.d,
            1,
            self.space.clone(),
            self.kernel_table.clone(),
        )
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn canonicalize(&self) -> Result<Self> {
        let canonical = self.unit_ensemble()?.canonicalize();
        Ok(Self {
            d: self.d,
            n: self.n,
            space: self.space.clone(),
            kernel_table: canonical.table().to_vec(),
        })
    }

    /// The product kernel h(x) = x_1 * ... * x_d on {-1, +1}^d atoms, the
    /// standard Rademacher chaos kernel.
    pub fn rademacher_product(d: usize, n: usize) -> Self {
        let m = 2usize.pow(d as u32);
        let mut table = vec![0.0; m];
        for (flat, value) in table.iter_mut().enumerate() {
            let ones = (0..d)
                .filter(|&bit| (flat >> (d - 1 - bit)) & 1 == 1)
                .count();
            // Atom 0 is -1, atom 1 is +1.
            *value = if (d - ones) % 2 == 0 { 1.0 } else { -1.0 };
        }
        Self {
            d,
            n,
            space: DiscreteSpace::rademacher(),
            kernel_table: table,
        }
    }
}

/// Input accepted wherever a kernel file is expected: either the compact
/// shared form or a full ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelInput {
    Shared(SharedKernel),
    Ensemble(KernelEnsemble),
}

impl KernelInput {
    pub fn ensemble(&self) -> Result<KernelEnsemble> {
        match self {
            KernelInput::Shared(s) => s.expand(),
            KernelInput::Ensemble(k) => Ok(k.clone()),
        }
    }

    pub fn shared(&self) -> Option<&SharedKernel> {
        match self {
            KernelInput::Shared(s) => Some(s),
            KernelInput::Ensemble(_) => None,
        }
    }
}

/// Random ensemble with standard-normal table entries. `uniform_probs`
/// selects uniform atom probabilities; otherwise probabilities are a
/// normalized exponential sample (a flat Dirichlet draw), one space per
/// (axis, index) pair.
pub fn random_ensemble(
    d: usize,
    n: usize,
    atom_counts: &[usize],
    seed: u64,
    uniform_probs: bool,
) -> Result<KernelEnsemble> {
    if atom_counts.len() != d {
        return Err(Error::Mismatch(format!(
            "{} atom counts for d = {d}",
            atom_counts.len()
        )));
    }
    let mut rng = derived_rng(seed, 0);
    let mut spaces = Vec::new();
    let mut space_refs = vec![vec![0usize; n]; d];
    for (axis, refs) in space_refs.iter_mut().enumerate() {
        let m = atom_counts[axis];
        let labels: Vec<String> =
            (0..m).map(|a| format!("a{a}")).collect();
        for r in refs.iter_mut() {
            let space = if uniform_probs {
                DiscreteSpace::uniform(labels.clone())?
            } else {
                let raw: Vec<f64> = (0..m)
                    .map(|_| -(1.0 - rng.random::<f64>()).ln())
                    .collect();
                let total: f64 = raw.iter().sum();
                DiscreteSpace::new(
                    labels.clone(),
                    raw.iter().map(|x| x / total).collect(),
                )?
            };
            spaces.push(space);
            *r = spaces.len() - 1;
        }
    }
    let idx_count = n.pow(d as u32);
    let atom_block: usize = atom_counts.iter().product();
    let table: Vec<f64> = (0..idx_count * atom_block)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    KernelEnsemble::new(d, n, spaces, space_refs, table)
}

/// Random ensemble pushed through the degeneracy projection.
pub fn random_canonical_ensemble(
    d: usize,
    n: usize,
    atom_counts: &[usize],
    seed: u64,
    uniform_probs: bool,
) -> Result<KernelEnsemble> {
    Ok(random_ensemble(d, n, atom_counts, seed, uniform_probs)?
        .canonicalize())
}
