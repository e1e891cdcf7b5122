//! Matrix-completion decoding: fill in lost reports by nuclear-norm
//! minimization, then decode occupancy from the completed report matrix.
//!
//! With a shared filter bank the report matrix `M = F diag(R) G^T` has rank
//! at most the number of occupied channels, so lost entries can be recovered
//! from the received ones. [`fpca_complete`] solves
//! `min tau ||M||_* + 1/2 ||P(M) - M^E||_F^2` by the fixed-point iteration
//! `Y = M - delta P*(P M - M^E)`, `M <- shrink(Y, tau delta)` with
//! continuation on `tau`. [`decode_occupancy`] then recovers the sparse
//! per-radio power columns by reweighted l1.

use crate::error::{invalid_config, invalid_input, Result};
use crate::jointsparse::{run_engine, EngineConfig, RecoveryOutcome, SolverParams};
use crate::linalg::{norm2, reconstruct_with, svd, truncated_svd, Mat};
use crate::num::Real;
use crate::scenario::{FilterBank, MeasurementSet};

/// Default outer iteration cap of [`decode_occupancy`].
pub const DECODE_MAX_ITERS: usize = 10;

/// Default relative misfit allowed when decoding completed columns, which
/// are only accurate to the completion tolerance.
pub const DECODE_FIT_TOL: f64 = 1e-4;

/// Detection parameters suited to decoding completed reports.
pub fn decode_params<T: Real>() -> SolverParams<T> {
    SolverParams {
        max_outer_iters: Some(DECODE_MAX_ITERS),
        fit_tol: T::lit(DECODE_FIT_TOL),
        ..SolverParams::default()
    }
}

/// Continuation schedule for the nuclear-norm weight.
#[derive(Debug, Clone, PartialEq)]
pub enum TauSchedule<T> {
    /// Geometric: `start, start*eta, ...` down to `end`, all relative to the
    /// largest singular value of the zero-filled observations.
    Relative { start: T, end: T, eta: T },
    /// Explicit strictly decreasing values in the units of the observations.
    Explicit(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpcaParams<T> {
    pub schedule: TauSchedule<T>,
    /// Gradient step `delta` in `(0, 2)`.
    pub delta: T,
    /// Stage ends when `||M_{k+1} - M_k||_F / max(1, ||M_k||_F) < mtol`.
    pub mtol: T,
    /// Iteration cap per continuation stage.
    pub max_iters: usize,
    /// When set, shrink with a randomized truncated SVD of this rank.
    pub rank_budget: Option<usize>,
    /// Record every iteration in [`CompletedMatrix::trace`].
    pub trace: bool,
}

impl<T: Real> Default for FpcaParams<T> {
    fn default() -> Self {
        Self {
            schedule: TauSchedule::Relative {
                start: T::lit(0.5),
                end: T::lit(1e-6),
                eta: T::lit(0.25),
            },
            delta: T::one(),
            mtol: T::lit(1e-6),
            max_iters: 2000,
            rank_budget: None,
            trace: false,
        }
    }
}

impl<T: Real> FpcaParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > T::zero() && self.delta < T::lit(2.0)) {
            return Err(invalid_config("delta must lie in (0, 2)"));
        }
        if !(self.mtol > T::zero()) {
            return Err(invalid_config("mtol must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(invalid_config("max_iters must be >= 1"));
        }
        if self.rank_budget == Some(0) {
            return Err(invalid_config("rank budget must be >= 1"));
        }
        match &self.schedule {
            TauSchedule::Relative { start, end, eta } => {
                if !(*end > T::zero() && *start >= *end && *eta > T::zero() && *eta < T::one()) {
                    return Err(invalid_config(
                        "tau schedule needs start >= end > 0 and eta in (0, 1)",
                    ));
                }
            }
            TauSchedule::Explicit(v) => {
                if v.is_empty() || v.iter().any(|t| !(*t > T::zero())) {
                    return Err(invalid_config("explicit tau values must be positive"));
                }
                if v.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(invalid_config("explicit tau values must strictly decrease"));
                }
            }
        }
        Ok(())
    }

    /// Stage weights in units of `sigma_1`, the largest singular value of the
    /// zero-filled observations.
    fn stages(&self, sigma1: T) -> Vec<T> {
        match &self.schedule {
            TauSchedule::Relative { start, end, eta } => {
                let mut out = Vec::new();
                let mut t = *start;
                while t > *end * (T::one() + T::lit(1e-9)) {
                    out.push(t);
                    t *= *eta;
                }
                out.push(*end);
                out
            }
            TauSchedule::Explicit(v) => v.iter().map(|&t| t / sigma1).collect(),
        }
    }
}

/// One fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FpcaStep<T> {
    pub stage: usize,
    pub tau: T,
    pub rel_change: T,
    /// `||P(M) - M^E||_F` after the step.
    pub residual: T,
    /// `tau ||M||_* + 1/2 ||P(M) - M^E||_F^2` after the step.
    pub objective: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletedMatrix<T> {
    pub m_hat: Mat<T>,
    pub iterations_used: usize,
    /// `||P(M_hat) - M^E||_F` over the observed entries.
    pub final_residual: T,
    /// False when the final stage stopped at its iteration cap.
    pub converged: bool,
    pub noise_sigma: T,
    pub trace: Vec<FpcaStep<T>>,
}

impl<T: Real> CompletedMatrix<T> {
    /// Wraps a matrix that is already fully known (no completion ran).
    pub fn from_matrix(m_hat: Mat<T>) -> Self {
        Self {
            m_hat,
            iterations_used: 0,
            final_residual: T::zero(),
            converged: true,
            noise_sigma: T::zero(),
            trace: Vec::new(),
        }
    }
}

/// Nuclear-norm completion of the observed reports by fixed-point
/// continuation.
pub fn fpca_complete<T: Real>(
    obs: &MeasurementSet<T>,
    params: &FpcaParams<T>,
) -> Result<CompletedMatrix<T>> {
    params.validate()?;
    if obs.observed_count() == 0 {
        return Err(invalid_input("no observed entries to complete from"));
    }
    let (p, m) = (obs.p(), obs.m());
    let mask = obs.mask();
    let me = obs.zero_filled();
    if !me.is_finite() {
        return Err(invalid_input("observed reports contain non-finite values"));
    }
    let sigma1 = svd(me)?.sigma.first().copied().unwrap_or_else(T::zero);
    if sigma1 == T::zero() {
        return Ok(CompletedMatrix {
            m_hat: Mat::zeros(p, m),
            iterations_used: 0,
            final_residual: T::zero(),
            converged: true,
            noise_sigma: obs.noise_sigma,
            trace: Vec::new(),
        });
    }
    let inv = T::one() / sigma1;
    let target = me.scaled(inv);
    let delta = params.delta;
    let full_rank = p.min(m);
    let budget = params.rank_budget.filter(|&r| r < full_rank);

    let mut cur = Mat::<T>::zeros(p, m);
    let mut total = 0;
    let mut converged = true;
    let mut trace = Vec::new();
    for (stage, tau) in params.stages(sigma1).into_iter().enumerate() {
        let alpha = tau * delta;
        let mut stage_done = false;
        for _ in 0..params.max_iters {
            let mut y = cur.clone();
            for ((yv, &t), &seen) in y.as_mut_slice().iter_mut().zip(target.as_slice()).zip(mask) {
                if seen {
                    let g = *yv - t;
                    *yv -= delta * g;
                }
            }
            let (next, nuclear) = shrink_with_norm(&y, alpha, budget)?;
            total += 1;
            let change = norm2(
                &next
                    .as_slice()
                    .iter()
                    .zip(cur.as_slice())
                    .map(|(&a, &b)| a - b)
                    .collect::<Vec<_>>(),
            );
            let rel = change / T::one().max(cur.frobenius_norm());
            cur = next;
            if params.trace {
                let r = observed_residual(&cur, &target, mask);
                trace.push(FpcaStep {
                    stage,
                    tau: tau * sigma1,
                    rel_change: rel,
                    residual: r * sigma1,
                    objective: (tau * nuclear + T::lit(0.5) * r * r) * sigma1 * sigma1,
                });
            }
            if rel < params.mtol {
                stage_done = true;
                break;
            }
        }
        converged = stage_done;
    }
    let m_hat = cur.scaled(sigma1);
    let final_residual = observed_residual(&m_hat, me, mask);
    Ok(CompletedMatrix {
        m_hat,
        iterations_used: total,
        final_residual,
        converged,
        noise_sigma: obs.noise_sigma,
        trace,
    })
}

fn shrink_with_norm<T: Real>(y: &Mat<T>, alpha: T, budget: Option<usize>) -> Result<(Mat<T>, T)> {
    let f = match budget {
        Some(r) => truncated_svd(y, r)?,
        None => svd(y)?,
    };
    let s: Vec<T> = f
        .sigma
        .iter()
        .map(|&v| (v - alpha).max(T::zero()))
        .collect();
    let nuclear = s.iter().copied().sum();
    Ok((reconstruct_with(&f.u, &s, &f.v), nuclear))
}

fn observed_residual<T: Real>(a: &Mat<T>, target: &Mat<T>, mask: &[bool]) -> T {
    let d: Vec<T> = a
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .zip(mask)
        .filter(|(_, &seen)| seen)
        .map(|((&x, &t), _)| x - t)
        .collect();
    norm2(&d)
}

/// Recovers per-radio channel powers and occupancy from completed reports.
///
/// Every column of `M_hat` is decoded by the weighted program
/// `min sum_i w_i x_i  s.t.  F x = M_hat_j` (or the noise ball around it),
/// `x >= 0`, starting from `w = 1`. After each round, channels voted in by the
/// sparse columns get weight zero; the loop stops when a round detects
/// nothing new, when the weighted mass becomes negligible, or after
/// `params.max_outer_iters` (default [`DECODE_MAX_ITERS`]) rounds.
pub fn decode_occupancy<T: Real>(
    completed: &CompletedMatrix<T>,
    filters: &FilterBank<T>,
    params: &SolverParams<T>,
) -> Result<RecoveryOutcome<T>> {
    params.validate()?;
    let f = filters
        .shared_bank()
        .ok_or_else(|| invalid_input("completion decoding needs a shared filter bank"))?;
    let m_hat = &completed.m_hat;
    if m_hat.nrows() != f.nrows() || m_hat.ncols() != filters.m() {
        return Err(invalid_input(format!(
            "completed matrix {:?} does not match filters ({} rows, {} radios)",
            m_hat.shape(),
            f.nrows(),
            filters.m()
        )));
    }
    if !m_hat.is_finite() {
        return Err(invalid_input("completed matrix has non-finite entries"));
    }
    let columns: Vec<(Mat<T>, Vec<T>)> = (0..m_hat.ncols())
        .map(|j| (f.clone(), m_hat.col(j).to_vec()))
        .collect();
    let cfg = EngineConfig {
        qualify: false,
        relax_infeasible: true,
        force_exclusion: false,
        max_iters: params.max_outer_iters.unwrap_or(DECODE_MAX_ITERS),
        tail_tol: params.effective_tail_tol(m_hat.ncols(), m_hat.frobenius_norm()),
        sigma: params.noise_sigma,
        params: params.clone(),
    };
    run_engine(f.ncols(), columns, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    #[test]
    fn fully_observed_is_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Mat::<f64>::from_fn(5, 4, |_, _| randn(&mut rng));
        let out = fpca_complete(
            &MeasurementSet::fully_observed(a.clone()),
            &FpcaParams::default(),
        )
        .unwrap();
        let err = out.m_hat.sub(&a).frobenius_norm() / a.frobenius_norm();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn zero_observations_complete_to_zero() {
        let ms = MeasurementSet::with_mask(
            Mat::<f64>::zeros(4, 3),
            vec![
                true, false, true, true, false, true, true, true, false, true, true, true,
            ],
        )
        .unwrap();
        let out = fpca_complete(&ms, &FpcaParams::default()).unwrap();
        assert_eq!(out.m_hat, Mat::zeros(4, 3));
    }

    #[test]
    fn empty_mask_rejected() {
        let ms = MeasurementSet::with_mask(Mat::<f64>::zeros(2, 2), vec![false; 4]).unwrap();
        assert!(fpca_complete(&ms, &FpcaParams::default()).is_err());
    }

    fn rank_one_instance(seed: u64) -> (Mat<f64>, MeasurementSet<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..8).map(|_| randn(&mut rng)).collect();
        let v: Vec<f64> = (0..8).map(|_| randn(&mut rng)).collect();
        let a = Mat::<f64>::from_fn(8, 8, |i, j| u[i] * v[j]);
        let mut mask_rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let mask: Vec<bool> = (0..64).map(|_| mask_rng.random::<f64>() < 0.6).collect();
        let ms = MeasurementSet::with_mask(a.clone(), mask).unwrap();
        (a, ms)
    }

    #[test]
    fn rank_one_eight_by_eight() {
        let (a, ms) = rank_one_instance(1);
        let out = fpca_complete(&ms, &FpcaParams::default()).unwrap();
        let err = out.m_hat.sub(&a).frobenius_norm() / a.frobenius_norm();
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn completion_never_exceeds_truth_nuclear_norm() {
        // At this size the truth is not always the minimum-nuclear-norm
        // completion, but the solver's answer must fit the observations and
        // be at least as good as the truth in nuclear norm.
        for seed in 0..10 {
            let (a, ms) = rank_one_instance(seed);
            let out = fpca_complete(&ms, &FpcaParams::default()).unwrap();
            assert!(out.final_residual < 1e-4 * a.frobenius_norm());
            let got = crate::linalg::nuclear_norm(&out.m_hat).unwrap();
            let truth = crate::linalg::nuclear_norm(&a).unwrap();
            assert!(got <= truth * (1.0 + 1e-4), "seed {seed}: {got} > {truth}");
        }
    }

    #[test]
    fn schedule_is_geometric_and_ends_at_final() {
        let p = FpcaParams::<f64>::default();
        let st = p.stages(1.0);
        assert_eq!(st[0], 0.5);
        assert_eq!(*st.last().unwrap(), 1e-6);
        assert!(st.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = FpcaParams::<f64> {
            delta: 2.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = FpcaParams::<f64> {
            schedule: TauSchedule::Explicit(vec![1.0, 1.0]),
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn decode_of_zero_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Mat::<f64>::from_fn(6, 12, |_, _| randn(&mut rng));
        let completed = CompletedMatrix {
            m_hat: Mat::zeros(6, 4),
            iterations_used: 0,
            final_residual: 0.0,
            converged: true,
            noise_sigma: 0.0,
            trace: Vec::new(),
        };
        let out = decode_occupancy(
            &completed,
            &FilterBank::shared(f, 4),
            &SolverParams::default(),
        )
        .unwrap();
        assert_eq!(out.occupancy.popcount(), 0);
        assert_eq!(out.x.x, Mat::zeros(12, 4));
    }
}
