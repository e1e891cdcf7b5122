//! `min c^T x  s.t.  ||F x - b||_2 <= r, x >= 0` for `c >= 0`.
//!
//! When the ball constraint is active the minimizer also minimizes
//! `mu c^T x + 1/2 ||F x - b||^2` over `x >= 0` for some `mu > 0`, and the
//! residual of that penalized minimizer grows monotonically with `mu`. The
//! solver therefore bisects on `mu` until the residual meets `r`, solving
//! each penalized problem with a warm-started Lawson-Hanson active set. The
//! returned point is always on the feasible side of the bracket.

use crate::error::{invalid_input, Error, Result};
use crate::linalg::dense::{cholesky_in_place, cholesky_solve};
use crate::linalg::{dot, norm2, Mat};
use crate::num::Real;

const BISECTION_STEPS: usize = 80;

pub struct BallLp<T> {
    f: Mat<T>,
    /// `b / ||b||`.
    b: Vec<T>,
    bnorm: T,
    ftb: Vec<T>,
    warm: Vec<T>,
}

impl<T: Real> BallLp<T> {
    pub fn new(f: &Mat<T>, b: &[T]) -> Result<Self> {
        if b.len() != f.nrows() {
            return Err(invalid_input("rhs length must equal row count"));
        }
        if !f.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(invalid_input("non-finite program data"));
        }
        let bnorm = norm2(b);
        let inv = if bnorm > T::zero() {
            T::one() / bnorm
        } else {
            T::one()
        };
        let b: Vec<T> = b.iter().map(|&v| v * inv).collect();
        let ftb = f.tr_mul_vec(&b);
        Ok(Self {
            f: f.clone(),
            b,
            bnorm,
            ftb,
            warm: vec![T::zero(); f.ncols()],
        })
    }

    pub fn solve(&mut self, cost: &[T], radius: T) -> Result<Vec<T>> {
        let n = self.f.ncols();
        if cost.len() != n || cost.iter().any(|&c| !(c >= T::zero())) {
            return Err(invalid_input("costs must be nonnegative, one per variable"));
        }
        if !(radius > T::zero()) {
            return Err(invalid_input("ball radius must be positive"));
        }
        if self.bnorm <= radius {
            return Ok(vec![T::zero(); n]);
        }
        let r = radius / self.bnorm;
        let all = vec![true; n];

        // Zero objective is optimal if the cost-free coordinates alone reach the ball.
        let free: Vec<bool> = cost.iter().map(|&c| c == T::zero()).collect();
        if free.iter().any(|&f| f) {
            let x = self.penalized(cost, T::zero(), &free, vec![T::zero(); n]);
            if self.residual(&x) <= r {
                self.warm = x.clone();
                return Ok(self.unscale(x));
            }
        }

        // Walk the multiplier down from the level where `x = 0` is optimal,
        // so the passive sets stay as small as the solution.
        let top = self.top_multiplier(cost);
        let floor = top * T::lit(1e-14);
        let mut hi = top;
        let mut x_hi = self.penalized(cost, hi, &all, vec![T::zero(); n]);
        // Cost-free columns can keep the fit inside the ball at `top`.
        while self.residual(&x_hi) <= r {
            hi *= T::lit(8.0);
            if hi > top * T::lit(1e30) {
                return Err(Error::Numerical("ball multiplier bracket diverged".into()));
            }
            x_hi = self.penalized(cost, hi, &all, x_hi);
        }
        let (mut lo, mut x_feasible) = loop {
            let mu = hi * T::lit(0.125);
            let x = self.penalized(cost, mu, &all, x_hi.clone());
            if self.residual(&x) <= r {
                break (mu, x);
            }
            if mu < floor {
                let (x, rho) = self.nnls();
                if rho > r * (T::one() + T::epsilon().sqrt()) {
                    return Err(Error::Infeasible(format!(
                        "closest nonnegative fit misses the ball: {} > {}",
                        rho.to_f64_lossy() * self.bnorm.to_f64_lossy(),
                        radius
                    )));
                }
                self.warm = x.clone();
                return Ok(self.unscale(x));
            }
            hi = mu;
            x_hi = x;
        };
        let rel = T::lit(1e-10).max(T::epsilon() * T::lit(16.0));
        for _ in 0..BISECTION_STEPS {
            let mid = (lo * hi).sqrt();
            let x_mid = self.penalized(cost, mid, &all, x_feasible.clone());
            let rho = self.residual(&x_mid);
            if rho <= r {
                lo = mid;
                x_feasible = x_mid;
                if r - rho <= rel * r {
                    break;
                }
            } else {
                hi = mid;
            }
            if hi - lo <= rel * hi {
                break;
            }
        }
        self.warm = x_feasible.clone();
        Ok(self.unscale(x_feasible))
    }

    /// `min ||F x - b||_2` over `x >= 0`.
    pub fn closest_fit(&mut self) -> T {
        self.nnls().1 * self.bnorm
    }

    /// `min c^T x` subject to `F x = b`, `x >= 0`.
    ///
    /// Follows the penalized path down in `mu` and, at each step, refits the
    /// passive columns exactly. The first nonnegative exact refit is optimal:
    /// `y = (b - F x(mu)) / mu` satisfies `F^T y <= c` with equality on the
    /// passive set, which certifies it. Fails with [`Error::Numerical`] if
    /// the path never produces such a refit, in which case the caller should
    /// fall back to a simplex.
    pub fn solve_exact(&mut self, cost: &[T]) -> Result<Vec<T>> {
        let n = self.f.ncols();
        if cost.len() != n || cost.iter().any(|&c| !(c >= T::zero())) {
            return Err(invalid_input("costs must be nonnegative, one per variable"));
        }
        if self.bnorm == T::zero() {
            return Ok(vec![T::zero(); n]);
        }
        let free: Vec<bool> = cost.iter().map(|&c| c == T::zero()).collect();
        if free.iter().any(|&f| f) {
            let x = self.penalized(cost, T::zero(), &free, vec![T::zero(); n]);
            if let Some(z) = self.polish(&x) {
                return Ok(self.unscale(z));
            }
        }
        let all = vec![true; n];
        let top = self.top_multiplier(cost);
        let mut mu = top;
        let mut x = vec![T::zero(); n];
        while mu > top * T::lit(1e-13) {
            mu *= T::lit(0.1);
            x = self.penalized(cost, mu, &all, x);
            if let Some(z) = self.polish(&x) {
                return Ok(self.unscale(z));
            }
        }
        Err(Error::Numerical(
            "penalized path produced no exact nonnegative fit".into(),
        ))
    }

    /// Least-squares refit of `b` on the support of `x`; `Some` only if it
    /// is nonnegative and fits exactly.
    fn polish(&self, x: &[T]) -> Option<Vec<T>> {
        let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > T::zero()).collect();
        if support.is_empty() {
            return None;
        }
        let zero = vec![T::zero(); x.len()];
        let z = self.passive_solve(&zero, T::zero(), &support)?;
        // Degenerate optima put some passive coordinates exactly at zero.
        let floor = -T::epsilon().sqrt() * z.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        if z.iter().any(|&v| v < floor) {
            return None;
        }
        let mut out = vec![T::zero(); x.len()];
        for (&i, &v) in support.iter().zip(&z) {
            out[i] = v.max(T::zero());
        }
        (self.residual(&out) <= T::epsilon().sqrt() * T::lit(0.1)).then_some(out)
    }

    /// Smallest `mu` at which `x = 0` minimizes the penalized problem over
    /// the costed columns.
    fn top_multiplier(&self, cost: &[T]) -> T {
        let mut top = T::zero();
        for (&g, &c) in self.ftb.iter().zip(cost) {
            if c > T::zero() {
                top = top.max(g / c);
            }
        }
        if top > T::zero() {
            top
        } else {
            T::one()
        }
    }

    fn nnls(&mut self) -> (Vec<T>, T) {
        let all = vec![true; self.f.ncols()];
        let zero = vec![T::zero(); self.f.ncols()];
        let x = self.penalized(&zero, T::zero(), &all, self.warm.clone());
        let rho = self.residual(&x);
        (x, rho)
    }

    fn unscale(&self, mut x: Vec<T>) -> Vec<T> {
        x.iter_mut().for_each(|v| *v *= self.bnorm);
        x
    }

    fn residual(&self, x: &[T]) -> T {
        let fx = self.f.mul_vec(x);
        let r: Vec<T> = fx.iter().zip(&self.b).map(|(&a, &b)| a - b).collect();
        norm2(&r)
    }

    /// Lawson-Hanson active set for `min mu c^T x + 1/2 ||F x - b||^2`,
    /// `x >= 0`, `x_i = 0` outside `allowed`.
    fn penalized(&self, cost: &[T], mu: T, allowed: &[bool], start: Vec<T>) -> Vec<T> {
        let n = self.f.ncols();
        let mut x = start;
        for i in 0..n {
            if !allowed[i] || !(x[i] > T::zero()) {
                x[i] = T::zero();
            }
        }
        let mut passive: Vec<usize> = (0..n).filter(|&i| x[i] > T::zero()).collect();
        let mut blocked = vec![false; n];
        let tol = T::epsilon() * T::from_usize_lossy(n.max(self.f.nrows())) * T::lit(16.0);

        if !passive.is_empty() {
            self.settle(cost, mu, &mut passive, &mut x, &mut blocked);
        }
        for _ in 0..3 * n + 10 {
            let fx = self.f.mul_vec(&x);
            let resid: Vec<T> = self.b.iter().zip(&fx).map(|(&b, &v)| b - v).collect();
            let mut best: Option<(T, usize)> = None;
            for j in 0..n {
                if !allowed[j] || blocked[j] || x[j] > T::zero() {
                    continue;
                }
                let w = dot(self.f.col(j), &resid) - mu * cost[j];
                if w > tol && best.map_or(true, |(bw, _)| w > bw) {
                    best = Some((w, j));
                }
            }
            let Some((_, j)) = best else { break };
            passive.push(j);
            if !self.settle(cost, mu, &mut passive, &mut x, &mut blocked) {
                blocked[j] = true;
            }
        }
        x
    }

    /// Inner loop: move toward the unconstrained minimizer on the passive set,
    /// dropping coordinates that hit zero. Returns `false` if the most
    /// recently added coordinate had to be dropped immediately.
    fn settle(
        &self,
        cost: &[T],
        mu: T,
        passive: &mut Vec<usize>,
        x: &mut [T],
        blocked: &mut [bool],
    ) -> bool {
        let last = *passive.last().expect("nonempty passive set");
        let tiny = T::min_positive_value().sqrt();
        for _ in 0..4 * passive.len() + 10 {
            let z = match self.passive_solve(cost, mu, passive) {
                Some(z) => z,
                None => {
                    // The entering column is dependent on the passive ones:
                    // trade it in along the null direction instead.
                    if passive.last() == Some(&last) && self.pivot_in(cost, passive, x) {
                        continue;
                    }
                    passive.retain(|&i| i != last);
                    x[last] = T::zero();
                    blocked[last] = true;
                    return false;
                }
            };
            if z.iter().all(|&v| v > tiny) {
                for (&i, &v) in passive.iter().zip(&z) {
                    x[i] = v;
                }
                return true;
            }
            let mut alpha = T::one();
            for (&i, &zi) in passive.iter().zip(&z) {
                if zi <= tiny {
                    let denom = x[i] - zi;
                    if denom > T::zero() {
                        alpha = alpha.min(x[i] / denom);
                    } else {
                        alpha = T::zero();
                    }
                }
            }
            for (&i, &zi) in passive.iter().zip(&z) {
                x[i] += alpha * (zi - x[i]);
            }
            let before = passive.len();
            passive.retain(|&i| {
                if x[i] <= tiny {
                    x[i] = T::zero();
                    false
                } else {
                    true
                }
            });
            if !passive.contains(&last) && before > passive.len() && alpha == T::zero() {
                blocked[last] = true;
                return false;
            }
            if passive.is_empty() {
                return true;
            }
        }
        true
    }

    /// Simplex-style exchange for a dependent entering column `e` (the last
    /// passive index): `F d = 0` with `d_e = 1` leaves the residual unchanged,
    /// so stepping along `d` lowers the objective by `mu c^T d` per unit until
    /// a passive coordinate reaches zero and leaves. Returns `false` if the
    /// direction does not lower the cost.
    fn pivot_in(&self, cost: &[T], passive: &mut Vec<usize>, x: &mut [T]) -> bool {
        let e = passive.pop().expect("nonempty passive set");
        let k = passive.len();
        let mut g = vec![T::zero(); k * k];
        for a in 0..k {
            let ca = self.f.col(passive[a]);
            for b in 0..=a {
                let v = dot(ca, self.f.col(passive[b]));
                g[a * k + b] = v;
                g[b * k + a] = v;
            }
        }
        let fe = self.f.col(e);
        if k == 0 || !cholesky_in_place(&mut g, k) {
            passive.push(e);
            return false;
        }
        let mut y: Vec<T> = passive.iter().map(|&i| dot(self.f.col(i), fe)).collect();
        cholesky_solve(&g, k, &mut y);
        // d = (-y, 1) must be (numerically) a null direction of F.
        let mut fd: Vec<T> = fe.to_vec();
        for (&i, &yi) in passive.iter().zip(&y) {
            for (v, &fi) in fd.iter_mut().zip(self.f.col(i)) {
                *v -= yi * fi;
            }
        }
        let slope = cost[e]
            - passive
                .iter()
                .zip(&y)
                .fold(T::zero(), |acc, (&i, &yi)| acc + cost[i] * yi);
        if !(norm2(&fd) <= T::epsilon().sqrt() * norm2(fe)) || !(slope < T::zero()) {
            passive.push(e);
            return false;
        }
        let mut step: Option<(T, usize)> = None;
        for (a, &yi) in y.iter().enumerate() {
            if yi > T::zero() {
                let t = x[passive[a]] / yi;
                if step.map_or(true, |(bt, _)| t < bt) {
                    step = Some((t, a));
                }
            }
        }
        let Some((t, leave)) = step else {
            passive.push(e);
            return false;
        };
        for (&i, &yi) in passive.iter().zip(&y) {
            x[i] -= t * yi;
        }
        x[passive[leave]] = T::zero();
        passive.remove(leave);
        x[e] = t;
        passive.push(e);
        true
    }

    fn passive_solve(&self, cost: &[T], mu: T, passive: &[usize]) -> Option<Vec<T>> {
        let k = passive.len();
        let mut g = vec![T::zero(); k * k];
        for a in 0..k {
            let ca = self.f.col(passive[a]);
            for b in 0..=a {
                let v = dot(ca, self.f.col(passive[b]));
                g[a * k + b] = v;
                g[b * k + a] = v;
            }
        }
        if !cholesky_in_place(&mut g, k) {
            return None;
        }
        let mut rhs: Vec<T> = passive
            .iter()
            .map(|&i| self.ftb[i] - mu * cost[i])
            .collect();
        cholesky_solve(&g, k, &mut rhs);
        rhs.iter().all(|v| v.is_finite()).then_some(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(p: usize, n: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (p as f64).sqrt();
        Mat::from_fn(p, n, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            s * z
        })
    }

    fn resid(f: &Mat<f64>, x: &[f64], b: &[f64]) -> f64 {
        let fx = f.mul_vec(x);
        norm2(&fx.iter().zip(b).map(|(a, b)| a - b).collect::<Vec<_>>())
    }

    #[test]
    fn small_rhs_gives_zero() {
        let f = gaussian(4, 8, 1);
        let mut lp = BallLp::new(&f, &[0.1, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(lp.solve(&[1.0; 8], 0.2).unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn tight_ball_matches_equality_program_when_underdetermined() {
        // Few rows: the active set fills up and entering columns are dependent.
        for seed in 0..20 {
            let f = gaussian(8, 35, 100 + seed);
            let mut x0 = vec![0.0; 35];
            x0[(seed as usize * 7) % 35] = 1.0 + seed as f64;
            let b = f.mul_vec(&x0);
            let cost = vec![1.0; 35];
            let exact = crate::jointsparse::EqualityLp::new(&f, &b)
                .unwrap()
                .minimize(&cost)
                .unwrap();
            let exact_obj: f64 = exact.iter().sum();
            let r = 1e-6 * norm2(&b);
            let x = BallLp::new(&f, &b).unwrap().solve(&cost, r).unwrap();
            let obj: f64 = x.iter().sum();
            assert!(resid(&f, &x, &b) <= r * (1.0 + 1e-6), "seed {seed}");
            assert!(
                obj <= exact_obj * (1.0 + 1e-9),
                "seed {seed}: {obj} > {exact_obj}"
            );
            assert!(
                obj >= exact_obj * (1.0 - 1e-3),
                "seed {seed}: {obj} << {exact_obj}"
            );
        }
    }

    #[test]
    fn exact_solve_matches_simplex() {
        for seed in 0..30u64 {
            let (p, n) = (6 + (seed as usize % 10), 30);
            let f = gaussian(p, n, 200 + seed);
            let mut x0 = vec![0.0; n];
            for k in 0..(1 + seed as usize % 3) {
                x0[(seed as usize * 11 + k * 7) % n] = 0.5 + k as f64;
            }
            let b = f.mul_vec(&x0);
            // Some channels already excluded from the costed set.
            let cost: Vec<f64> = (0..n)
                .map(|i| {
                    if i % 9 == (seed as usize % 9) {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect();
            let simplex = crate::jointsparse::EqualityLp::new(&f, &b)
                .unwrap()
                .minimize(&cost)
                .unwrap();
            let want: f64 = simplex.iter().zip(&cost).map(|(x, c)| x * c).sum();
            let x = BallLp::new(&f, &b).unwrap().solve_exact(&cost).unwrap();
            let got: f64 = x.iter().zip(&cost).map(|(x, c)| x * c).sum();
            assert!(x.iter().all(|v| *v >= 0.0));
            assert!(resid(&f, &x, &b) <= 1e-8 * norm2(&b), "seed {seed}");
            assert!(
                (got - want).abs() <= 1e-7 * (1.0 + want),
                "seed {seed}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn exact_solve_reports_missing_fit() {
        // b outside the cone spanned by nonnegative combinations.
        let f = Mat::from_rows(&[&[1.0, 2.0], &[1.0, 1.0]]);
        let mut lp = BallLp::new(&f, &[-1.0, -1.0]).unwrap();
        assert!(matches!(
            lp.solve_exact(&[1.0, 1.0]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn sparse_signal_within_ball() {
        let f = gaussian(20, 50, 2);
        let mut x0 = vec![0.0; 50];
        x0[7] = 2.0;
        x0[31] = 0.5;
        let b = f.mul_vec(&x0);
        let mut lp = BallLp::new(&f, &b).unwrap();
        let x = lp.solve(&vec![1.0; 50], 0.05).unwrap();
        assert!(resid(&f, &x, &b) <= 0.05 * (1.0 + 1e-9));
        assert!((resid(&f, &x, &b) - 0.05).abs() < 1e-8);
        assert!(x.iter().all(|v| *v >= 0.0));
        let big: Vec<usize> = (0..50).filter(|&i| x[i] > 0.1).collect();
        assert_eq!(big, vec![7, 31]);
        // l1 mass shrinks relative to the truth because the ball is active.
        assert!(x.iter().sum::<f64>() < 2.5);
    }

    #[test]
    fn free_coordinates_absorb_signal() {
        let f = gaussian(10, 30, 3);
        let mut x0 = vec![0.0; 30];
        x0[4] = 1.0;
        let b = f.mul_vec(&x0);
        let mut cost = vec![1.0; 30];
        cost[4] = 0.0;
        let mut lp = BallLp::new(&f, &b).unwrap();
        let x = lp.solve(&cost, 1e-3).unwrap();
        let obj: f64 = x.iter().zip(&cost).map(|(a, b)| a * b).sum();
        assert!(obj.abs() < 1e-12);
        assert!((x[4] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_ball() {
        // Every column is nonnegative, target is negative.
        let f = Mat::<f64>::from_rows(&[&[1.0, 2.0], &[1.0, 1.0]]);
        let mut lp = BallLp::new(&f, &[-1.0, -1.0]).unwrap();
        assert!(matches!(
            lp.solve(&[1.0, 1.0], 0.5),
            Err(Error::Infeasible(_))
        ));
    }
}
