//! Dense linear-algebra kernels: matrices, SVD, and the matrix shrinkage
//! operator. Every function here is pure.

pub mod dense;
mod matrix;
mod shrink;
mod svd;

pub use matrix::{axpy, dot, norm2, Mat};
pub use shrink::{nuclear_norm, shrink, shrink_rank_limited};
pub(crate) use svd::reconstruct_with;
pub use svd::{
    numerical_rank_of, rank, svd, truncated_svd, truncated_svd_seeded, SvdFactors, OVERSAMPLING,
    POWER_STEPS,
};
