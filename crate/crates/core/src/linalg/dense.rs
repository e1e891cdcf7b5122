//! Small dense factorizations used by the inner solvers.

use crate::num::Real;

/// In-place Cholesky factorization of a symmetric positive definite matrix
/// stored row-major as `n * n`. Returns `false` when a pivot is not
/// sufficiently positive.
pub fn cholesky_in_place<T: Real>(a: &mut [T], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    let floor = T::epsilon() * T::lit(16.0);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > floor * a[j * n + j].abs().max(T::min_positive_value())) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

/// Solves `L L^T x = b` given the factor from [`cholesky_in_place`].
pub fn cholesky_solve<T: Real>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}
