//! Crate-wide error type.
//!
//! Variants are grouped so the CLI can map them onto its exit codes: input
//! and domain problems (exit 2), canonicality violations (exit 3), and
//! verification failures (exit 1, reported, not raised as errors).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Array construction or lookup with an inconsistent shape.
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// Partition violates its invariants or does not match the array.
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// Operands disagree on dimensions, grounds, or grids.
    #[error("mismatch: {0}")]
    Mismatch(String),

    /// Parameter outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Requested method cannot handle the instance (e.g. exact SVD on a
    /// partition of degree three or more).
    #[error("unsupported method: {0}")]
    Unsupported(String),

    /// Exact enumeration would visit more states than the configured budget.
    #[error(
        "enumeration budget exceeded: {states} states > budget {budget}; \
         use the Monte Carlo mode or raise the budget"
    )]
    BudgetExceeded { states: u128, budget: u128 },

    /// Kernel fails the per-coordinate degeneracy check. Reports the worst
    /// offending axis/index pair and its conditional mean.
    #[error(
        "kernel is not canonical: axis {axis}, index {index}: \
         |conditional mean| = {deviation:.6e} exceeds tolerance {tol:.1e}"
    )]
    NotCanonical {
        axis: usize,
        index: usize,
        deviation: f64,
        tol: f64,
    },

    /// Malformed textual input (partition specs, config files).
    #[error("parse error: {0}")]
    Parse(String),

    /// Calibration set admits no finite constant (a right-hand side is zero
    /// while the left-hand side is not).
    #[error("infeasible fit: {0}")]
    InfeasibleFit(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI assigns to this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotCanonical { .. } => 3,
            _ => 2,
        }
    }
}
