//! Sampling, exact laws, constant fitting, and verification harness.
//!
//! Every seeded entry point is reproducible bit for bit across thread
//! counts: draws are split into fixed-size chunks, chunk c consumes its
//! own derived stream, and partial results merge in chunk order.

pub mod exact;
pub mod fit;
pub mod sampler;
pub mod stream;
pub mod summary;
pub mod verify;

pub use exact::{exact_distribution, ExactDistribution, SupportPoint};
pub use fit::{fit_constant, FitResult, RatioPoint};
pub use sampler::{
    gaussian_matrix_norm_check, sample_gaussian_chaos, sample_ustatistic,
    MatrixNormCheck,
};
pub use stream::{sample_mean, MeanSummary};
pub use summary::{
    run_summaries, MomentEstimate, SampleRun, SummarySpec, TailCount,
};
pub use verify::{
    verify_iid_tail_bound, verify_moment_bound, verify_tail_bound,
    wilson_upper, MomentRow, MomentVerification, TailRow, TailVerification,
    Z99,
};
