//! Dense two-phase primal simplex for `min c^T x  s.t.  A x = b, x >= 0`.
//!
//! Phase one runs once per constraint set; the resulting feasible basis is
//! kept so that later solves with different costs start from the previous
//! optimum. That is the access pattern of the truncated-l1 loop, where only
//! the cost vector changes between outer iterations.

use crate::error::{invalid_input, Error, Result};
use crate::linalg::{norm2, Mat};
use crate::num::Real;

/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 40;

pub struct EqualityLp<T> {
    n: usize,
    width: usize,
    tab: Vec<T>,
    basis: Vec<usize>,
    scale: T,
    /// Original system restricted to the rows kept after phase one, used to
    /// verify and, if needed, refine the basic solution.
    a_rows: Mat<T>,
    b_rows: Vec<T>,
    tol: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Optimal,
    Unbounded,
}

impl<T: Real> EqualityLp<T> {
    /// Runs phase one. Fails with [`Error::Infeasible`] when `A x = b` has no
    /// nonnegative solution.
    pub fn new(a: &Mat<T>, b: &[T]) -> Result<Self> {
        let (p, n) = a.shape();
        if b.len() != p {
            return Err(invalid_input(format!("rhs length {} != rows {p}", b.len())));
        }
        if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(invalid_input("non-finite linear program data"));
        }
        let bmax = b.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let scale = if bmax > T::zero() { bmax } else { T::one() };
        let tol = T::epsilon().sqrt() * T::lit(0.1);

        let width = n + p + 1;
        let mut tab = vec![T::zero(); p * width];
        for i in 0..p {
            let sgn = if b[i] < T::zero() {
                -T::one()
            } else {
                T::one()
            };
            let row = &mut tab[i * width..(i + 1) * width];
            for j in 0..n {
                row[j] = sgn * a[(i, j)];
            }
            row[n + i] = T::one();
            row[width - 1] = sgn * b[i] / scale;
        }
        let mut lp = Self {
            n,
            width,
            tab,
            basis: (n..n + p).collect(),
            scale,
            a_rows: a.clone(),
            b_rows: b.to_vec(),
            tol,
        };

        // Phase one: minimize the sum of artificials.
        let mut rc = vec![T::zero(); width - 1];
        let mut obj = T::zero();
        for i in 0..p {
            let row = lp.row(i);
            for j in 0..n {
                rc[j] -= row[j];
            }
            obj += row[width - 1];
        }
        let cap = 50 * (n + p) + 1000;
        lp.run(&mut rc, &mut obj, n, cap)?;
        let infeasibility = lp.artificial_mass();
        let feas_tol = tol * T::from_usize_lossy(p.max(1)).sqrt();
        if infeasibility > feas_tol {
            return Err(Error::Infeasible(format!(
                "no nonnegative solution (phase-one residual {:e})",
                infeasibility.to_f64_lossy()
            )));
        }
        lp.expel_artificials();
        Ok(lp)
    }

    pub fn rows(&self) -> usize {
        self.basis.len()
    }

    pub fn vars(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, i: usize) -> &[T] {
        &self.tab[i * self.width..(i + 1) * self.width]
    }

    fn artificial_mass(&self) -> T {
        let last = self.width - 1;
        (0..self.basis.len())
            .filter(|&i| self.basis[i] >= self.n)
            .map(|i| self.tab[i * self.width + last].abs())
            .sum()
    }

    /// Pivots basic artificials out on structural columns, drops redundant
    /// rows, and discards the artificial columns.
    fn expel_artificials(&mut self) {
        let mut keep = vec![true; self.basis.len()];
        for i in 0..self.basis.len() {
            if self.basis[i] < self.n {
                continue;
            }
            let row = self.row(i);
            let mut best: Option<(T, usize)> = None;
            for (j, &v) in row[..self.n].iter().enumerate() {
                if v.abs() > self.tol && best.map_or(true, |(b, _)| v.abs() > b) {
                    best = Some((v.abs(), j));
                }
            }
            match best {
                Some((_, j)) => {
                    let mut dummy_rc = Vec::new();
                    let mut dummy_obj = T::zero();
                    self.pivot(i, j, &mut dummy_rc, &mut dummy_obj);
                }
                None => keep[i] = false,
            }
        }
        let new_width = self.n + 1;
        let mut tab = Vec::with_capacity(keep.iter().filter(|&&k| k).count() * new_width);
        let mut basis = Vec::new();
        let mut kept_rows = Vec::new();
        for i in 0..self.basis.len() {
            if !keep[i] {
                continue;
            }
            let row = self.row(i);
            tab.extend_from_slice(&row[..self.n]);
            tab.push(row[self.width - 1].max(T::zero()));
            basis.push(self.basis[i]);
            kept_rows.push(i);
        }
        // Row i of the tableau corresponds to original constraint i only up
        // to row operations; the kept original rows still span the same
        // affine set because dropped rows were linear combinations.
        self.a_rows = self.a_rows.select_rows(&kept_rows);
        self.b_rows = kept_rows.iter().map(|&i| self.b_rows[i]).collect();
        self.tab = tab;
        self.basis = basis;
        self.width = new_width;
    }

    fn pivot(&mut self, r: usize, c: usize, rc: &mut [T], obj: &mut T) {
        let w = self.width;
        let piv = self.tab[r * w + c];
        let inv = T::one() / piv;
        for v in &mut self.tab[r * w..(r + 1) * w] {
            *v *= inv;
        }
        let (before, rest) = self.tab.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        let eliminate = |row: &mut [T]| {
            let f = row[c];
            if f != T::zero() {
                for (x, &y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[c] = T::zero();
            }
        };
        before.chunks_exact_mut(w).for_each(eliminate);
        after.chunks_exact_mut(w).for_each(eliminate);
        if !rc.is_empty() {
            let f = rc[c];
            if f != T::zero() {
                for (x, &y) in rc.iter_mut().zip(prow[..w - 1].iter()) {
                    *x -= f * y;
                }
                *obj -= f * prow[w - 1];
                rc[c] = T::zero();
            }
        }
        self.basis[r] = c;
    }

    /// Primal simplex from the current (feasible) basis. Only columns below
    /// `enter_limit` may enter.
    fn run(
        &mut self,
        rc: &mut [T],
        obj: &mut T,
        enter_limit: usize,
        cap: usize,
    ) -> Result<Outcome> {
        let w = self.width;
        let rows = self.basis.len();
        let mut streak = 0usize;
        for _ in 0..cap {
            let bland = streak >= DEGENERATE_STREAK;
            let mut enter = None;
            let mut best = -self.tol;
            for (j, &v) in rc[..enter_limit].iter().enumerate() {
                if v < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = v;
                }
            }
            let Some(c) = enter else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(T, usize)> = None;
            for i in 0..rows {
                let a = self.tab[i * w + c];
                if a > self.tol {
                    let ratio = self.tab[i * w + w - 1].max(T::zero()) / a;
                    let better = match leave {
                        None => true,
                        Some((r, li)) => {
                            ratio < r || (ratio == r && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((ratio, i));
                    }
                }
            }
            let Some((ratio, r)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if ratio <= self.tol {
                streak += 1;
            } else {
                streak = 0;
            }
            self.pivot(r, c, rc, obj);
        }
        Err(Error::Numerical("simplex iteration cap reached".into()))
    }

    /// Solves for a new cost vector starting from the current basis.
    pub fn minimize(&mut self, cost: &[T]) -> Result<Vec<T>> {
        if cost.len() != self.n {
            return Err(invalid_input("cost length must equal variable count"));
        }
        let w = self.width;
        let mut rc = cost.to_vec();
        let mut obj = T::zero();
        for (i, &bi) in self.basis.iter().enumerate() {
            let cb = cost[bi];
            if cb != T::zero() {
                let row = &self.tab[i * w..(i + 1) * w];
                for (x, &y) in rc.iter_mut().zip(&row[..w - 1]) {
                    *x -= cb * y;
                }
                obj += cb * row[w - 1];
            }
        }
        let cap = 50 * (self.n + self.basis.len()) + 1000;
        match self.run(&mut rc, &mut obj, self.n, cap)? {
            Outcome::Optimal => {}
            Outcome::Unbounded => {
                return Err(invalid_input("linear program is unbounded"));
            }
        }
        Ok(self.solution())
    }

    fn solution(&mut self) -> Vec<T> {
        let w = self.width;
        let mut x = vec![T::zero(); self.n];
        for (i, &bi) in self.basis.iter().enumerate() {
            x[bi] = self.tab[i * w + w - 1].max(T::zero()) * self.scale;
        }
        let bnorm = norm2(&self.b_rows);
        let limit = T::lit(1e-10) * (T::one() + bnorm);
        if residual(&self.a_rows, &x, &self.b_rows) > limit {
            if let Some(refined) = self.refine() {
                x = refined;
            }
        }
        x
    }

    /// Re-solves `A_B x_B = b` from the original data by LU with partial
    /// pivoting.
    fn refine(&self) -> Option<Vec<T>> {
        let k = self.basis.len();
        let mut lu = vec![T::zero(); k * k];
        for (c, &bj) in self.basis.iter().enumerate() {
            let col = self.a_rows.col(bj);
            for r in 0..k {
                lu[r * k + c] = col[r];
            }
        }
        let mut rhs = self.b_rows.clone();
        for col in 0..k {
            let piv = (col..k).max_by(|&a, &b| {
                lu[a * k + col]
                    .abs()
                    .partial_cmp(&lu[b * k + col].abs())
                    .unwrap()
            })?;
            if lu[piv * k + col] == T::zero() {
                return None;
            }
            if piv != col {
                for j in 0..k {
                    lu.swap(piv * k + j, col * k + j);
                }
                rhs.swap(piv, col);
            }
            let d = lu[col * k + col];
            for r in col + 1..k {
                let f = lu[r * k + col] / d;
                if f != T::zero() {
                    for j in col..k {
                        let v = lu[col * k + j];
                        lu[r * k + j] -= f * v;
                    }
                    let pivot_rhs = rhs[col];
                    rhs[r] -= f * pivot_rhs;
                }
            }
        }
        let mut xb = vec![T::zero(); k];
        for r in (0..k).rev() {
            let mut s = rhs[r];
            for j in r + 1..k {
                s -= lu[r * k + j] * xb[j];
            }
            xb[r] = s / lu[r * k + r];
        }
        let mut x = vec![T::zero(); self.n];
        for (i, &bi) in self.basis.iter().enumerate() {
            x[bi] = xb[i].max(T::zero());
        }
        Some(x)
    }
}

pub(crate) fn residual<T: Real>(a: &Mat<T>, x: &[T], b: &[T]) -> T {
    let ax = a.mul_vec(x);
    let r: Vec<T> = ax.iter().zip(b).map(|(&u, &v)| u - v).collect();
    norm2(&r)
}
