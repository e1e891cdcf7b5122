//! Per-iteration building blocks of the joint detection loop: which radios
//! take part, which recovered columns are believable, how channels are voted
//! in, how the working set `T` evolves and when to stop.

use crate::linalg::Mat;
use crate::num::Real;

/// Radios with enough received measurements to attempt recovery.
///
/// Radio `j` qualifies iff `counts[j] >= factor * max(detected, n - |T|)` and
/// `counts[j] >= 1`.
pub fn qualify_crs<T: Real>(
    counts: &[usize],
    detected: usize,
    outside_t: usize,
    factor: T,
) -> Vec<usize> {
    let need = factor * T::from_usize_lossy(detected.max(outside_t));
    counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c >= 1 && T::from_usize_lossy(c) >= need)
        .map(|(j, _)| j)
        .collect()
}

/// Numerical support size: entries above `trust_eps * max|x|`.
pub fn support_size<T: Real>(x: &[T], trust_eps: T) -> usize {
    let peak = x.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    if peak == T::zero() {
        return 0;
    }
    let cut = trust_eps * peak;
    x.iter().filter(|v| v.abs() > cut).count()
}

/// A recovered column and what is known about it.
#[derive(Debug, Clone)]
pub struct Column<'a, T> {
    pub radio: usize,
    pub x: &'a [T],
    /// Measurements the column was recovered from.
    pub p_avail: usize,
}

/// Trusted columns and their vote weights `p_j / k_j`.
///
/// A column is trusted when it is sparse relative to its measurement count:
/// `2 k_j <= p_j`. A zero column is trusted with weight zero (it casts no
/// votes).
pub fn select_trusted<'a, T: Real>(
    columns: &[Column<'a, T>],
    trust_eps: T,
) -> Vec<(Column<'a, T>, T)> {
    columns
        .iter()
        .filter_map(|c| {
            let k = support_size(c.x, trust_eps);
            if 2 * k > c.p_avail {
                return None;
            }
            let w = if k == 0 {
                T::zero()
            } else {
                T::from_usize_lossy(c.p_avail) / T::from_usize_lossy(k)
            };
            Some((c.clone(), w))
        })
        .collect()
}

/// Vote-based detection among `candidates`.
///
/// In every trusted column, a candidate votes when its entry is at least
/// `peak_frac` of the largest candidate entry in that column and above the
/// column's own support cutoff. A channel's score is the weighted share of
/// voting columns that it appears in. Channels scoring at least
/// `vote_threshold` times the best score are detected, so the strongest
/// channel is always picked up once any column votes.
///
/// Returns the detected channels (ascending) and the score of every channel.
pub fn detect_channels<T: Real>(
    trusted: &[(Column<'_, T>, T)],
    candidates: &[bool],
    trust_eps: T,
    peak_frac: T,
    vote_threshold: T,
) -> (Vec<usize>, Vec<T>) {
    let n = candidates.len();
    let mut votes = vec![T::zero(); n];
    let mut total = T::zero();
    for (col, w) in trusted {
        if *w == T::zero() {
            continue;
        }
        let col_peak = col.x.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        let cand_peak = (0..n)
            .filter(|&i| candidates[i])
            .fold(T::zero(), |m, i| m.max(col.x[i]));
        let floor = trust_eps * col_peak;
        if cand_peak <= floor {
            // Everything this column sees is already accounted for.
            total += *w;
            continue;
        }
        let cut = peak_frac * cand_peak;
        for i in 0..n {
            if candidates[i] && col.x[i] >= cut && col.x[i] > floor {
                votes[i] += *w;
            }
        }
        total += *w;
    }
    if total == T::zero() {
        return (Vec::new(), vec![T::zero(); n]);
    }
    let scores: Vec<T> = votes.into_iter().map(|v| v / total).collect();
    let best = scores.iter().fold(T::zero(), |m, &v| m.max(v));
    if best == T::zero() {
        return (Vec::new(), scores);
    }
    let bar = vote_threshold * best;
    let found = (0..n)
        .filter(|&i| candidates[i] && scores[i] > T::zero() && scores[i] >= bar)
        .collect();
    (found, scores)
}

/// `sum_{i in T} ||X_i||_p / sum_{i not in T} ||X_i||_p`.
///
/// Both sums zero gives `0`; a zero denominator with mass in `T` gives `+inf`.
pub fn tail_size<T: Real>(x: &Mat<T>, in_t: &[bool], p_norm: T) -> T {
    assert_eq!(x.nrows(), in_t.len(), "one membership flag per channel");
    let (mut inside, mut outside) = (T::zero(), T::zero());
    for (i, &member) in in_t.iter().enumerate() {
        let r = row_norm(x, i, p_norm);
        if member {
            inside += r;
        } else {
            outside += r;
        }
    }
    if inside == T::zero() {
        T::zero()
    } else if outside == T::zero() {
        T::infinity()
    } else {
        inside / outside
    }
}

/// `||X_{i,.}||_p` for `p >= 1` (`p = inf` allowed).
pub fn row_norm<T: Real>(x: &Mat<T>, i: usize, p: T) -> T {
    let row = (0..x.ncols()).map(|j| x[(i, j)].abs());
    if p.is_infinite() {
        return row.fold(T::zero(), T::max);
    }
    if p == T::one() {
        return row.sum();
    }
    let peak = (0..x.ncols()).fold(T::zero(), |m, j| m.max(x[(i, j)].abs()));
    if peak == T::zero() {
        return T::zero();
    }
    let s: T = row.map(|v| (v / peak).powf(p)).sum();
    peak * s.powf(T::one() / p)
}

/// Working state of the detection loop.
#[derive(Debug, Clone)]
pub struct JointState<T> {
    /// Membership in `T`, the channels presumed unused.
    pub in_t: Vec<bool>,
    /// Detected channels in detection order.
    pub detected: Vec<usize>,
    /// Channels removed from `T` without a vote.
    pub forced: Vec<bool>,
    pub x: Mat<T>,
    pub stagnation_count: u32,
    pub iteration: usize,
}

/// What [`JointState::update_t`] did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TUpdate {
    /// Detections shrank `T`.
    Progress,
    /// No detection left `T`; these channels were force-excluded.
    Forced(Vec<usize>),
    /// Forcing would have emptied `T`.
    Exhausted,
}

impl<T: Real> JointState<T> {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            in_t: vec![true; n],
            detected: Vec::new(),
            forced: vec![false; n],
            x: Mat::zeros(n, m),
            stagnation_count: 0,
            iteration: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.in_t.len()
    }

    pub fn t_size(&self) -> usize {
        self.in_t.iter().filter(|&&b| b).count()
    }

    pub fn is_detected(&self, i: usize) -> bool {
        self.detected.contains(&i)
    }

    /// Channels that may still be voted in.
    pub fn candidates(&self) -> Vec<bool> {
        let mut c = vec![true; self.n()];
        for &i in &self.detected {
            c[i] = false;
        }
        c
    }

    /// Records `newly` as detected and rebuilds `T`. When nothing left `T`,
    /// the `2^stagnation_count` members of `T` with the largest row norms are
    /// force-excluded (at most `max(1, n/4)` at once).
    pub fn update_t(&mut self, newly: &[usize]) -> TUpdate {
        let before = self.t_size();
        for &i in newly {
            if !self.is_detected(i) {
                self.detected.push(i);
            }
            self.in_t[i] = false;
        }
        if self.t_size() < before {
            self.stagnation_count = 0;
            return TUpdate::Progress;
        }
        self.stagnation_count += 1;
        let n = self.n();
        let cap = (n / 4).max(1);
        let want = 1usize
            .checked_shl(self.stagnation_count.min(63))
            .unwrap_or(usize::MAX)
            .min(cap);
        let mut members: Vec<(T, usize)> = (0..n)
            .filter(|&i| self.in_t[i])
            .map(|i| (row_norm(&self.x, i, T::lit(2.0)), i))
            .collect();
        if members.len() <= want {
            return TUpdate::Exhausted;
        }
        members.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        let chosen: Vec<usize> = members[..want].iter().map(|&(_, i)| i).collect();
        for &i in &chosen {
            self.in_t[i] = false;
            self.forced[i] = true;
        }
        TUpdate::Forced(chosen)
    }
}
