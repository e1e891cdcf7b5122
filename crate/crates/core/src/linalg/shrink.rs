use super::matrix::Mat;
use super::svd::{reconstruct_with, svd, truncated_svd};
use crate::error::{invalid_input, Result};
use crate::num::Real;

/// Singular-value soft-thresholding `U diag(max(sigma - alpha, 0)) V^T`,
/// the proximal map of `alpha * ||.||_*`.
pub fn shrink<T: Real>(a: &Mat<T>, alpha: T) -> Result<Mat<T>> {
    check_alpha(alpha)?;
    let f = svd(a)?;
    let s = soft(&f.sigma, alpha);
    Ok(reconstruct_with(&f.u, &s, &f.v))
}

/// Shrinkage restricted to the top `r` singular triplets, computed with the
/// randomized truncated SVD. Falls back to the exact path when `r` covers
/// the full rank.
pub fn shrink_rank_limited<T: Real>(a: &Mat<T>, alpha: T, r: usize) -> Result<Mat<T>> {
    check_alpha(alpha)?;
    if r >= a.nrows().min(a.ncols()) {
        return shrink(a, alpha);
    }
    let f = truncated_svd(a, r)?;
    let s = soft(&f.sigma, alpha);
    Ok(reconstruct_with(&f.u, &s, &f.v))
}

pub fn nuclear_norm<T: Real>(a: &Mat<T>) -> Result<T> {
    Ok(svd(a)?.sigma.into_iter().sum())
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha.is_nan() || alpha < T::zero() {
        return Err(invalid_input(format!(
            "shrink threshold must be >= 0, got {alpha}"
        )));
    }
    Ok(())
}

fn soft<T: Real>(sigma: &[T], alpha: T) -> Vec<T> {
    sigma.iter().map(|&s| (s - alpha).max(T::zero())).collect()
}
