//! Partition norms of multi-index kernel arrays and the moment/tail machinery
//! built on them: canonical (completely degenerate) decoupled U-statistics over
//! finite discrete spaces, Gaussian chaos estimates, and compensated Poisson
//! multiple integrals with step kernels.
//!
//! The library is organised bottom-up:
//!
//! * [`tensor`] holds dense multi-index arrays, partitions of axis sets, and
//!   the partition-norm engine (exact SVD for degree <= 2, seeded alternating
//!   maximization above that).
//! * [`kernel`] models ensembles of kernels on finite probability spaces,
//!   canonicalization, and conditional partition norms via a weighted
//!   embedding that reduces the functional norms to array norms.
//! * [`bounds`] evaluates the moment and tail bounds driven by those norms.
//! * [`montecarlo`] samples the statistics, enumerates exact laws where
//!   feasible, fits empirical constants, and verifies bounds.
//! * [`poisson`] carries the step-kernel analogue for compensated Poisson
//!   integrals on a product of grids.
//! * [`experiment`] runs config-driven verification pipelines for the CLI.
//!
//! All randomized routines take explicit seeds and produce results that are
//! independent of thread count.

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod montecarlo;
pub mod numeric;
pub mod poisson;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
