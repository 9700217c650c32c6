//! Dense multi-index arrays, partitions of axis sets, and partition norms.
//!
//! A partition norm generalizes the classical matrix norms: the one-block
//! partition gives the Frobenius norm, a two-block partition the spectral
//! norm of the corresponding matricization, and the all-singletons partition
//! the injective tensor norm. Coarser partitions give larger norms.

mod array;
mod norm;
mod partition;

pub(crate) use array::increment_index;
pub use array::{matricize, MultiIndexArray};
pub use norm::{
    multilinear_eval, partition_norm, NormCertificate, NormConfig, NormMethod,
};
pub use partition::{enumerate_partitions, Partition};
