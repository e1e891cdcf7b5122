//! Joint-sparse recovery of channel occupancy from per-radio compressed
//! reports.
//!
//! Every radio `j` observes `b_j = F_j x_j` where `x_j` is the column of
//! per-channel received powers. The columns share a row support: the
//! occupied channels. [`joint_recover`] alternates independent per-radio
//! truncated-l1 recoveries with a joint vote over the recovered columns,
//! moving detected channels out of the penalized working set `T` until the
//! mass left inside `T` becomes negligible.
//!
//! The column programs are linear programs (noiseless) or l1 problems over a
//! noise ball; both are solved by the exact solvers in [`lp`] and [`ball`].

pub mod ball;
pub mod detect;
pub mod lp;

use rayon::prelude::*;

use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::linalg::{norm2, Mat};
use crate::num::Real;
use crate::scenario::{FilterBank, MeasurementSet, OccupancyVector};

pub use ball::BallLp;
pub use detect::{
    detect_channels, qualify_crs, row_norm, select_trusted, support_size, tail_size, Column,
    JointState, TUpdate,
};
pub use lp::EqualityLp;

/// Tunables of the detection loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams<T> {
    /// Per-entry standard deviation of the measurement noise; zero selects
    /// equality-constrained column programs.
    pub noise_sigma: T,
    /// A radio takes part when its received count is at least this multiple
    /// of `max(detected, n - |T|)`.
    pub qualify_factor: T,
    /// Stop once the tail size drops below this; `None` derives it from the
    /// noise level.
    pub tail_tol: Option<T>,
    /// Outer iteration cap; `None` means `n`, which the monotone shrinking of
    /// `T` never exceeds.
    pub max_outer_iters: Option<usize>,
    /// Support cutoff relative to a column's largest entry.
    pub trust_eps: T,
    /// An entry votes when it reaches this fraction of the column's largest
    /// candidate entry.
    pub peak_frac: T,
    /// Channels scoring at least this fraction of the best score are detected.
    pub vote_threshold: T,
    /// Row norm used by the tail statistic.
    pub p_norm: T,
    /// Relative misfit allowed in every column program: the constraint
    /// becomes `||F x - b|| <= max(noise radius, fit_tol ||b||)`. Zero keeps
    /// exact equality in the noiseless case.
    pub fit_tol: T,
}

impl<T: Real> Default for SolverParams<T> {
    fn default() -> Self {
        Self {
            noise_sigma: T::zero(),
            qualify_factor: T::lit(2.0),
            tail_tol: None,
            max_outer_iters: None,
            trust_eps: T::lit(1e-3),
            peak_frac: T::lit(0.1),
            vote_threshold: T::lit(0.5),
            p_norm: T::lit(2.0),
            fit_tol: T::zero(),
        }
    }
}

impl<T: Real> SolverParams<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v > T::zero() && v <= T::one();
        if !(self.noise_sigma >= T::zero() && self.noise_sigma.is_finite()) {
            return Err(invalid_config("noise sigma must be finite and >= 0"));
        }
        if !(self.qualify_factor >= T::zero() && self.qualify_factor.is_finite()) {
            return Err(invalid_config("qualify factor must be finite and >= 0"));
        }
        if let Some(t) = self.tail_tol {
            if !(t > T::zero()) {
                return Err(invalid_config("tail tolerance must be > 0"));
            }
        }
        if self.max_outer_iters == Some(0) {
            return Err(invalid_config("max outer iterations must be >= 1"));
        }
        if !(self.trust_eps > T::zero() && self.trust_eps < T::one()) {
            return Err(invalid_config("trust_eps must lie in (0, 1)"));
        }
        if !unit(self.peak_frac) || !unit(self.vote_threshold) {
            return Err(invalid_config(
                "peak_frac and vote_threshold must lie in (0, 1]",
            ));
        }
        if !(self.p_norm >= T::one()) {
            return Err(invalid_config("p_norm must be >= 1"));
        }
        if !(self.fit_tol >= T::zero() && self.fit_tol < T::one()) {
            return Err(invalid_config("fit_tol must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Tail tolerance in effect for measurements with the given observed
    /// Frobenius norm: `1e-3` without noise, otherwise
    /// `max(1e-3, 2 sigma sqrt(m) / ||B||_F)`.
    pub fn effective_tail_tol(&self, m: usize, observed_norm: T) -> T {
        if let Some(t) = self.tail_tol {
            return t;
        }
        let base = T::lit(1e-3);
        if self.noise_sigma == T::zero() || observed_norm == T::zero() {
            return base;
        }
        let est = T::lit(2.0) * self.noise_sigma * T::from_usize_lossy(m).sqrt() / observed_norm;
        base.max(est)
    }
}

/// Ball radius covering the noise of `p` i.i.d. `N(0, sigma^2)` entries with
/// high probability: `sigma sqrt(p + 2 sqrt(2 p))` (mean plus two standard
/// deviations of the chi-square).
pub fn noise_radius<T: Real>(sigma: T, p: usize) -> T {
    let p = T::from_usize_lossy(p);
    sigma * (p + T::lit(2.0) * (T::lit(2.0) * p).sqrt()).sqrt()
}

/// Recovered per-radio channel powers, `n x m`, one column per radio.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPowerMatrix<T> {
    pub x: Mat<T>,
}

impl<T: Real> ChannelPowerMatrix<T> {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    /// `||X_{i,.}||_2` for every channel.
    pub fn row_norms(&self) -> Vec<T> {
        (0..self.n())
            .map(|i| row_norm(&self.x, i, T::lit(2.0)))
            .collect()
    }
}

/// One outer iteration of the detection loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    /// `|T|` the column programs were solved with.
    pub t_size: usize,
    pub qualified: usize,
    pub trusted: usize,
    pub tail: T,
    pub detected: Vec<usize>,
    pub forced: Vec<usize>,
}

/// A column program that could not be solved.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedColumn {
    pub iteration: usize,
    pub radio: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOutcome<T> {
    pub x: ChannelPowerMatrix<T>,
    pub occupancy: OccupancyVector,
    /// Detected channels in detection order.
    pub detected: Vec<usize>,
    pub trace: Vec<IterationRecord<T>>,
    /// Whether a stopping rule fired before the iteration cap or exhaustion
    /// of `T`.
    pub converged: bool,
    pub skipped: Vec<SkippedColumn>,
}

impl<T> RecoveryOutcome<T> {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Column program for one radio, built once and re-solved with new costs.
pub(crate) enum ColumnSolver<T> {
    Equality {
        lp: BallLp<T>,
        /// Built on first use, when the active-set path fails to certify.
        simplex: Option<EqualityLp<T>>,
        f: Mat<T>,
        b: Vec<T>,
    },
    Ball {
        lp: BallLp<T>,
        radius: T,
        /// Widen the ball to just past the closest nonnegative fit instead
        /// of failing when the data leave the reachable cone.
        relax: bool,
    },
}

impl<T: Real> ColumnSolver<T> {
    /// Equality program when `sigma = 0` and `fit_tol = 0`, otherwise a ball
    /// of radius `max(noise_radius(sigma, p), fit_tol ||b||)`.
    pub(crate) fn build(f: &Mat<T>, b: &[T], sigma: T, fit_tol: T, relax: bool) -> Result<Self> {
        let radius = noise_radius(sigma, b.len()).max(fit_tol * norm2(b));
        let lp = BallLp::new(f, b)?;
        if radius > T::zero() {
            Ok(Self::Ball { lp, radius, relax })
        } else {
            Ok(Self::Equality {
                lp,
                simplex: None,
                f: f.clone(),
                b: b.to_vec(),
            })
        }
    }

    pub(crate) fn solve(&mut self, cost: &[T]) -> Result<Vec<T>> {
        match self {
            Self::Equality { lp, simplex, f, b } => {
                if simplex.is_none() {
                    match lp.solve_exact(cost) {
                        Err(Error::Numerical(_)) => *simplex = Some(EqualityLp::new(f, b)?),
                        other => return other,
                    }
                }
                simplex.as_mut().expect("set above").minimize(cost)
            }
            Self::Ball { lp, radius, relax } => match lp.solve(cost, *radius) {
                Err(Error::Infeasible(_)) if *relax => {
                    *radius = lp.closest_fit() * T::lit(1.01);
                    lp.solve(cost, *radius)
                }
                other => other,
            },
        }
    }
}

/// Minimizes `sum_{i in T} x_i` subject to `F x = b` (`sigma = 0`) or
/// `||F x - b||_2 <= sigma sqrt(p + 2 sqrt(2p))` (`sigma > 0`), `x >= 0`.
///
/// `sigma` is the per-entry noise standard deviation.
pub fn independence_recovery<T: Real>(
    f: &Mat<T>,
    b: &[T],
    in_t: &[bool],
    sigma: T,
) -> Result<Vec<T>> {
    if in_t.len() != f.ncols() {
        return Err(invalid_input("one membership flag per channel required"));
    }
    if !(sigma >= T::zero()) {
        return Err(invalid_input("sigma must be >= 0"));
    }
    let cost: Vec<T> = in_t
        .iter()
        .map(|&t| if t { T::one() } else { T::zero() })
        .collect();
    ColumnSolver::build(f, b, sigma, T::zero(), false)?.solve(&cost)
}

/// How the shared detection engine behaves.
pub(crate) struct EngineConfig<T> {
    pub qualify: bool,
    pub relax_infeasible: bool,
    pub force_exclusion: bool,
    pub max_iters: usize,
    pub tail_tol: T,
    pub sigma: T,
    pub params: SolverParams<T>,
}

struct Slot<T> {
    f: Mat<T>,
    b: Vec<T>,
    solver: Option<ColumnSolver<T>>,
    /// Set when the constraint set itself is infeasible.
    dead: Option<String>,
}

enum ColumnResult<T> {
    Solved(Vec<T>),
    Skipped(String),
    Idle,
}

/// Runs the detection loop over per-radio column programs `(F_j, b_j)`.
///
/// With `force_exclusion` the loop follows the full joint detection rules
/// (qualification, forced exclusion on stagnation, tail-size stopping); without
/// it, it is the reweighted decode used after matrix completion, which stops
/// as soon as an iteration detects nothing new.
pub(crate) fn run_engine<T: Real>(
    n: usize,
    columns: Vec<(Mat<T>, Vec<T>)>,
    cfg: &EngineConfig<T>,
) -> Result<RecoveryOutcome<T>> {
    let m = columns.len();
    let p = &cfg.params;
    let counts: Vec<usize> = columns.iter().map(|(_, b)| b.len()).collect();
    let mut slots: Vec<Slot<T>> = columns
        .into_iter()
        .map(|(f, b)| Slot {
            f,
            b,
            solver: None,
            dead: None,
        })
        .collect();
    let mut state = JointState::<T>::new(n, m);
    let mut trace = Vec::new();
    let mut skipped = Vec::new();
    let mut converged = false;

    for it in 1..=cfg.max_iters {
        state.iteration = it;
        let t_size = state.t_size();
        let qualified: Vec<usize> = if cfg.qualify {
            qualify_crs(&counts, state.detected.len(), n - t_size, p.qualify_factor)
        } else {
            (0..m).filter(|&j| counts[j] >= 1).collect()
        };
        if qualified.is_empty() {
            if it == 1 {
                return Err(Error::Unrecoverable(
                    "no radio has enough received measurements to attempt recovery".into(),
                ));
            }
            break;
        }
        let mut take = vec![false; m];
        for &j in &qualified {
            take[j] = true;
        }

        let cost: Vec<T> = state
            .in_t
            .iter()
            .map(|&t| if t { T::one() } else { T::zero() })
            .collect();
        let results: Vec<ColumnResult<T>> = slots
            .par_iter_mut()
            .enumerate()
            .map(|(j, slot)| {
                if !take[j] {
                    return ColumnResult::Idle;
                }
                if let Some(reason) = &slot.dead {
                    return ColumnResult::Skipped(reason.clone());
                }
                if slot.solver.is_none() {
                    match ColumnSolver::build(
                        &slot.f,
                        &slot.b,
                        cfg.sigma,
                        p.fit_tol,
                        cfg.relax_infeasible,
                    ) {
                        Ok(s) => slot.solver = Some(s),
                        Err(e) => {
                            let reason = e.to_string();
                            slot.dead = Some(reason.clone());
                            return ColumnResult::Skipped(reason);
                        }
                    }
                }
                match slot.solver.as_mut().expect("built above").solve(&cost) {
                    Ok(x) => ColumnResult::Solved(x),
                    Err(e) => ColumnResult::Skipped(e.to_string()),
                }
            })
            .collect();

        let mut solved = Vec::new();
        for (j, r) in results.into_iter().enumerate() {
            match r {
                ColumnResult::Solved(x) => {
                    state.x.col_mut(j).copy_from_slice(&x);
                    solved.push(j);
                }
                ColumnResult::Skipped(reason) => {
                    state.x.col_mut(j).iter_mut().for_each(|v| *v = T::zero());
                    skipped.push(SkippedColumn {
                        iteration: it,
                        radio: j,
                        reason,
                    });
                }
                ColumnResult::Idle => {
                    state.x.col_mut(j).iter_mut().for_each(|v| *v = T::zero());
                }
            }
        }
        if solved.is_empty() {
            return Err(Error::DecodeFailure(format!(
                "every column program failed in iteration {it}"
            )));
        }

        let tail = tail_size(&state.x, &state.in_t, p.p_norm);
        let mut record = IterationRecord {
            iteration: it,
            t_size,
            qualified: qualified.len(),
            trusted: 0,
            tail,
            detected: Vec::new(),
            forced: Vec::new(),
        };

        let cols: Vec<Column<'_, T>> = solved
            .iter()
            .map(|&j| Column {
                radio: j,
                x: state.x.col(j),
                p_avail: counts[j],
            })
            .collect();
        let trusted = select_trusted(&cols, p.trust_eps);
        record.trusted = trusted.len();

        if tail < cfg.tail_tol {
            // The current split explains the reports. Channels that were
            // pushed out of T without a vote still need one to be reported.
            let candidates: Vec<bool> = (0..n)
                .map(|i| state.forced[i] && !state.is_detected(i))
                .collect();
            if candidates.iter().any(|&c| c) {
                let (found, _) = detect_channels(
                    &trusted,
                    &candidates,
                    p.trust_eps,
                    p.peak_frac,
                    p.vote_threshold,
                );
                drop(cols);
                drop(trusted);
                for &i in &found {
                    state.detected.push(i);
                }
                record.detected = found;
            }
            trace.push(record);
            converged = true;
            break;
        }

        let candidates = state.candidates();
        let (found, _) = detect_channels(
            &trusted,
            &candidates,
            p.trust_eps,
            p.peak_frac,
            p.vote_threshold,
        );
        drop(cols);
        drop(trusted);
        record.detected = found.clone();

        if cfg.force_exclusion {
            match state.update_t(&found) {
                TUpdate::Progress => {}
                TUpdate::Forced(chosen) => record.forced = chosen,
                TUpdate::Exhausted => {
                    trace.push(record);
                    break;
                }
            }
            trace.push(record);
        } else {
            trace.push(record);
            if found.is_empty() {
                converged = true;
                break;
            }
            state.update_t(&found);
        }
    }

    let mut occupancy = vec![false; n];
    for &i in &state.detected {
        occupancy[i] = true;
    }
    Ok(RecoveryOutcome {
        x: ChannelPowerMatrix { x: state.x },
        occupancy: OccupancyVector::from_states(occupancy),
        detected: state.detected,
        trace,
        converged,
        skipped,
    })
}

/// Joint detection from per-radio reports.
///
/// Each radio's filter rows are restricted to the reports that arrived. The
/// loop qualifies radios with enough reports, recovers their columns with the
/// truncated objective `sum_{i in T} x_i`, votes channels in from trusted
/// (sparse) columns, shrinks `T`, and stops when the tail size falls below
/// the tolerance. The reported occupancy is the detected set.
pub fn joint_recover<T: Real>(
    measurements: &MeasurementSet<T>,
    filters: &FilterBank<T>,
    params: &SolverParams<T>,
) -> Result<RecoveryOutcome<T>> {
    params.validate()?;
    let (p, m) = (measurements.p(), measurements.m());
    if filters.p() != p || filters.m() != m {
        return Err(invalid_input(format!(
            "filters ({} x {} for {} radios) do not match reports ({p} x {m})",
            filters.p(),
            filters.n(),
            filters.m()
        )));
    }
    let n = filters.n();
    let mut observed = Vec::new();
    let columns: Vec<(Mat<T>, Vec<T>)> = (0..m)
        .map(|j| {
            let (rows, values) = measurements.column_observations(j);
            observed.extend_from_slice(&values);
            (filters.for_radio(j).select_rows(&rows), values)
        })
        .collect();
    let cfg = EngineConfig {
        qualify: true,
        relax_infeasible: false,
        force_exclusion: true,
        max_iters: params.max_outer_iters.unwrap_or(n).max(1),
        tail_tol: params.effective_tail_tol(m, norm2(&observed)),
        sigma: params.noise_sigma,
        params: params.clone(),
    };
    run_engine(n, columns, &cfg)
}
