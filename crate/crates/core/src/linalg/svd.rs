//! Singular value decompositions.
//!
//! The full decomposition is a one-sided (Hestenes) Jacobi sweep, which
//! delivers singular values to high relative accuracy on the small dense
//! matrices this crate works with. The truncated variant is a randomized
//! range finder with power iterations whose small projected problem is
//! handed back to the Jacobi kernel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::{axpy, dot, norm2, Mat};
use crate::error::{invalid_input, Error, Result};
use crate::num::Real;

const MAX_SWEEPS: usize = 80;

/// Power iterations used by [`truncated_svd`].
pub const POWER_STEPS: usize = 2;
/// Extra sketch columns used by [`truncated_svd`].
pub const OVERSAMPLING: usize = 5;

/// Thin SVD factors `A = U diag(sigma) V^T`.
///
/// `sigma` is nonincreasing and nonnegative; `U` and `V` have orthonormal
/// columns. The first entry of each `U` column whose magnitude exceeds
/// `sqrt(eps)` is nonnegative.
#[derive(Debug, Clone)]
pub struct SvdFactors<T> {
    pub u: Mat<T>,
    pub sigma: Vec<T>,
    pub v: Mat<T>,
}

impl<T: Real> SvdFactors<T> {
    pub fn rank_budget(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> Mat<T> {
        reconstruct_with(&self.u, &self.sigma, &self.v)
    }

    /// Numerical rank with cutoff `1e-10 * sigma_1`.
    pub fn numerical_rank(&self) -> usize {
        numerical_rank_of(&self.sigma)
    }
}

/// Counts singular values above `1e-10 * sigma_1`.
pub fn numerical_rank_of<T: Real>(sigma: &[T]) -> usize {
    let s1 = sigma.first().copied().unwrap_or_else(T::zero);
    if s1 <= T::zero() {
        return 0;
    }
    let cut = T::lit(1e-10) * s1;
    sigma.iter().filter(|&&s| s > cut).count()
}

/// Numerical rank of a matrix (cutoff `1e-10 * sigma_1`).
pub fn rank<T: Real>(a: &Mat<T>) -> Result<usize> {
    Ok(svd(a)?.numerical_rank())
}

pub(crate) fn reconstruct_with<T: Real>(u: &Mat<T>, sigma: &[T], v: &Mat<T>) -> Mat<T> {
    let (p, m) = (u.nrows(), v.nrows());
    let mut out = Mat::zeros(p, m);
    for (k, &s) in sigma.iter().enumerate() {
        if s == T::zero() {
            continue;
        }
        let uk = u.col(k);
        for (j, &vjk) in v.col(k).iter().enumerate() {
            let c = s * vjk;
            if c != T::zero() {
                axpy(c, uk, out.col_mut(j));
            }
        }
    }
    out
}

/// Full thin SVD with `r = min(p, m)` triplets.
pub fn svd<T: Real>(a: &Mat<T>) -> Result<SvdFactors<T>> {
    if !a.is_finite() {
        return Err(invalid_input("svd: matrix has non-finite entries"));
    }
    let (p, m) = a.shape();
    if p == 0 || m == 0 {
        return Ok(SvdFactors {
            u: Mat::zeros(p, 0),
            sigma: Vec::new(),
            v: Mat::zeros(m, 0),
        });
    }
    if p >= m {
        jacobi_tall(a.clone())
    } else {
        let t = jacobi_tall(a.transpose())?;
        let mut f = SvdFactors {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
        fix_signs(&mut f);
        Ok(f)
    }
}

/// One-sided Jacobi on a tall (or square) matrix: orthogonalizes the columns
/// of `w` by plane rotations accumulated into `v`.
fn jacobi_tall<T: Real>(mut w: Mat<T>) -> Result<SvdFactors<T>> {
    let (p, m) = w.shape();
    let mut v = Mat::<T>::identity(m);
    let tol = T::epsilon() * T::from_usize_lossy(p).sqrt();
    // Columns below this squared norm are numerically zero; rotating them
    // only shuffles rounding noise and can keep the sweep from settling.
    let floor = {
        let f = w.frobenius_norm() * T::epsilon();
        f * f
    };
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..m - 1 {
            for j in i + 1..m {
                let (wi, wj) = w.col_pair_mut(i, j);
                let alpha = dot(wi, wi);
                let beta = dot(wj, wj);
                let gamma = dot(wi, wj);
                if gamma == T::zero()
                    || alpha <= floor
                    || beta <= floor
                    || gamma.abs() <= tol * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(wi, wj, c, s);
                let (vi, vj) = v.col_pair_mut(i, j);
                rotate(vi, vj, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("jacobi svd did not converge".into()));
    }

    let norms: Vec<T> = (0..m).map(|j| norm2(w.col(j))).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));

    let smax = norms[order[0]];
    let tiny = smax * T::epsilon() * T::from_usize_lossy(p.max(m));
    let mut u = Mat::zeros(p, m);
    let mut vs = Mat::zeros(m, m);
    let mut sigma = Vec::with_capacity(m);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        vs.col_mut(k).copy_from_slice(v.col(j));
        if s > tiny {
            let inv = T::one() / s;
            for (dst, &src) in u.col_mut(k).iter_mut().zip(w.col(j)) {
                *dst = src * inv;
            }
        }
    }
    complete_orthonormal(&mut u, 0);
    let mut f = SvdFactors { u, sigma, v: vs };
    fix_signs(&mut f);
    Ok(f)
}

#[inline]
fn rotate<T: Real>(x: &mut [T], y: &mut [T], c: T, s: T) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Re-orthonormalizes columns `from..` of `q` against all earlier columns by
/// modified Gram-Schmidt (two passes). Columns that collapse are replaced by
/// standard basis vectors orthogonalized the same way, so the result always
/// has orthonormal columns.
pub(crate) fn complete_orthonormal<T: Real>(q: &mut Mat<T>, from: usize) {
    let (p, k) = q.shape();
    for j in from..k {
        let original = norm2(q.col(j));
        let mut ok = false;
        if original > T::zero() {
            ok = orthogonalize_column(q, j, original);
        }
        if !ok {
            // Try standard basis vectors, preferring the one least covered
            // by the columns already present.
            let mut best: Option<(T, usize)> = None;
            for e in 0..p {
                let mut cover = T::zero();
                for c in 0..j {
                    let v = q[(e, c)];
                    cover += v * v;
                }
                let residual = T::one() - cover;
                if best.map_or(true, |(r, _)| residual > r) {
                    best = Some((residual, e));
                }
            }
            let e = best.map(|(_, e)| e).unwrap_or(0);
            let col = q.col_mut(j);
            col.iter_mut().for_each(|v| *v = T::zero());
            col[e] = T::one();
            orthogonalize_column(q, j, T::one());
        }
    }
}

fn orthogonalize_column<T: Real>(q: &mut Mat<T>, j: usize, reference: T) -> bool {
    for _ in 0..2 {
        for c in 0..j {
            let (qc, qj) = q.col_pair_mut(c, j);
            let h = dot(qc, qj);
            axpy(-h, qc, qj);
        }
    }
    let nrm = norm2(q.col(j));
    if nrm <= T::lit(1e-3) * reference || nrm == T::zero() {
        return false;
    }
    let inv = T::one() / nrm;
    q.col_mut(j).iter_mut().for_each(|v| *v *= inv);
    true
}

fn fix_signs<T: Real>(f: &mut SvdFactors<T>) {
    let cut = T::epsilon().sqrt();
    for k in 0..f.sigma.len() {
        let lead = f.u.col(k).iter().copied().find(|v| v.abs() > cut);
        if matches!(lead, Some(v) if v < T::zero()) {
            f.u.col_mut(k).iter_mut().for_each(|v| *v = -*v);
            f.v.col_mut(k).iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Approximate top-`r` singular triplets via a seeded Gaussian sketch with
/// [`OVERSAMPLING`] extra columns and [`POWER_STEPS`] power iterations.
///
/// The sketch seed depends only on the matrix shape, so the result is a pure
/// function of the input.
pub fn truncated_svd<T: Real>(a: &Mat<T>, r: usize) -> Result<SvdFactors<T>> {
    let (p, m) = a.shape();
    let seed = 0x5eed_0000_u64 ^ ((p as u64) << 32) ^ (m as u64);
    truncated_svd_seeded(a, r, seed)
}

pub fn truncated_svd_seeded<T: Real>(a: &Mat<T>, r: usize, seed: u64) -> Result<SvdFactors<T>> {
    let (p, m) = a.shape();
    let full = p.min(m);
    if r == 0 || r > full {
        return Err(invalid_input(format!(
            "truncated_svd: rank budget {r} outside 1..={full}"
        )));
    }
    if !a.is_finite() {
        return Err(invalid_input(
            "truncated_svd: matrix has non-finite entries",
        ));
    }
    let k = (r + OVERSAMPLING).min(full);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = Mat::<T>::from_fn(m, k, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::lit(z)
    });

    let mut q = a.matmul(&omega);
    complete_orthonormal(&mut q, 0);
    for _ in 0..POWER_STEPS {
        let mut z = a.tr_matmul(&q);
        complete_orthonormal(&mut z, 0);
        q = a.matmul(&z);
        complete_orthonormal(&mut q, 0);
    }

    // B = Q^T A is k x m; its SVD lifts back through Q.
    let b = q.tr_matmul(a);
    let small = svd(&b)?;
    let u_full = q.matmul(&small.u);
    let keep: Vec<usize> = (0..r).collect();
    let mut f = SvdFactors {
        u: u_full.select_cols(&keep),
        sigma: small.sigma[..r].to_vec(),
        v: small.v.select_cols(&keep),
    };
    fix_signs(&mut f);
    Ok(f)
}
