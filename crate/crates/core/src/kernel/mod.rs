//! Kernels on products of finite probability spaces.
//!
//! An ensemble holds one kernel h_i per index tuple i in {1..n}^d, where the
//! coordinate on axis j at index i_j is a random atom of a finite space. The
//! associated statistic is the decoupled sum Z = sum_i h_i(X^(1)_{i_1}, ...,
//! X^(d)_{i_d}) with independent samples across both axes and indices.
//! Canonical (completely degenerate) kernels satisfy E_j h_i = 0 for every
//! axis j, which the Hoeffding-style projection [`KernelEnsemble::canonicalize`]
//! enforces.
//!
//! Conditional partition norms over an axis set I are computed losslessly by
//! [`weighted_embedding`]: on finite spaces, a block function with unit
//! second moment corresponds to a unit vector once each coordinate is scaled
//! by the root of its probability, so the functional norm equals the array
//! partition norm of the weighted table.

mod conditional;
mod ensemble;
mod space;

pub use conditional::{
    conditional_partition_norm, expected_max_conditional_norm,
    sup_conditional_norm, weighted_embedding, EvaluationMode,
    OutcomeAssignment,
};
pub use ensemble::{
    random_canonical_ensemble, random_ensemble, KernelEnsemble, KernelInput,
    SharedKernel, CANONICAL_TOL,
};
pub use space::DiscreteSpace;
