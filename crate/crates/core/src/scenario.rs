//! Forward model: network geometry, channel gains, random filter banks,
//! the report matrix `M = F diag(R) G^T`, report erasures and measurement
//! noise.
//!
//! Every generator is a pure function of its configuration and a 64-bit
//! seed. Independent random streams are split off a seed with ChaCha's
//! stream selector, so adding draws to one stage never shifts another.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::linalg::Mat;
use crate::num::Real;

const STREAM_GEOMETRY: u64 = 1;
const STREAM_GAIN: u64 = 2;
const STREAM_FILTERS: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_ERASURE: u64 = 5;

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Small-scale fading law applied to `|h|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fading {
    /// `|h| = 1`.
    Awgn,
    /// `|h|` Rayleigh with unit mean square.
    Rayleigh,
    /// `20 log10 |h| ~ N(0, sigma_db^2)`.
    LogNormal { sigma_db: f64 },
}

impl Fading {
    pub const DEFAULT_SHADOW_DB: f64 = 8.0;

    pub fn name(&self) -> &'static str {
        match self {
            Fading::Awgn => "awgn",
            Fading::Rayleigh => "rayleigh",
            Fading::LogNormal { .. } => "lognormal",
        }
    }

    /// One draw of `|h|`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Fading::Awgn => 1.0,
            Fading::Rayleigh => {
                let n = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
                let re: f64 = n.sample(rng);
                let im: f64 = n.sample(rng);
                re.hypot(im)
            }
            Fading::LogNormal { sigma_db } => {
                let sigma = sigma_db * std::f64::consts::LN_10 / 20.0;
                LogNormal::new(0.0, sigma).unwrap().sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Channel count.
    pub n: usize,
    /// Cognitive radio count.
    pub m: usize,
    /// Occupied channel count, one primary transmitter each.
    pub s: usize,
    /// Propagation loss exponent.
    pub alpha: f64,
    /// Primary transmit power (linear).
    pub tx_power: f64,
    pub fading: Fading,
    /// Side of the square holding the radios, centered on the fusion center (m).
    pub cr_area: f64,
    /// Side of the square holding the primary transmitters (m).
    pub pr_area: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 35,
            m: 20,
            s: 2,
            alpha: 3.0,
            tx_power: 1.0,
            fading: Fading::Awgn,
            cr_area: 500.0,
            pr_area: 1000.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid_config("n must be at least 1"));
        }
        if self.m == 0 {
            return Err(invalid_config("m must be at least 1"));
        }
        if self.s > self.n {
            return Err(invalid_config(format!(
                "s = {} exceeds channel count n = {}",
                self.s, self.n
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid_config(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.tx_power > 0.0 && self.tx_power.is_finite()) {
            return Err(invalid_config("tx_power must be positive"));
        }
        if !(self.cr_area > 0.0 && self.pr_area > 0.0) {
            return Err(invalid_config("placement areas must be positive"));
        }
        if let Fading::LogNormal { sigma_db } = self.fading {
            if !(sigma_db >= 0.0 && sigma_db.is_finite()) {
                return Err(invalid_config("shadowing sigma_db must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Binary channel states, the diagonal of `R`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OccupancyVector {
    states: Vec<bool>,
}

impl OccupancyVector {
    pub fn empty(n: usize) -> Self {
        Self {
            states: vec![false; n],
        }
    }

    pub fn from_states(states: Vec<bool>) -> Self {
        Self { states }
    }

    pub fn from_indices(n: usize, occupied: &[usize]) -> Result<Self> {
        let mut states = vec![false; n];
        for &i in occupied {
            if i >= n {
                return Err(invalid_input(format!(
                    "channel {i} out of range for n = {n}"
                )));
            }
            states[i] = true;
        }
        Ok(Self { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.states.iter().filter(|&&b| b).count()
    }

    pub fn is_occupied(&self, i: usize) -> bool {
        self.states[i]
    }

    pub fn states(&self) -> &[bool] {
        &self.states
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.states.len()).filter(|&i| self.states[i]).collect()
    }
}

/// A generated network: radio and transmitter positions plus channel
/// assignment. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkScenario {
    pub config: ScenarioConfig,
    pub cr_positions: Vec<[f64; 2]>,
    pub pr_positions: Vec<[f64; 2]>,
    /// Channel used by each primary transmitter; distinct.
    pub pr_channels: Vec<usize>,
    pub rng_seed: u64,
}

impl NetworkScenario {
    /// Assembles a scenario from explicit parts, checking all invariants.
    pub fn from_parts(
        config: ScenarioConfig,
        cr_positions: Vec<[f64; 2]>,
        pr_positions: Vec<[f64; 2]>,
        pr_channels: Vec<usize>,
        rng_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if cr_positions.len() != config.m {
            return Err(invalid_config("cr_positions length must equal m"));
        }
        if pr_positions.len() != config.s || pr_channels.len() != config.s {
            return Err(invalid_config(
                "one position and one channel per primary user",
            ));
        }
        let mut seen = vec![false; config.n];
        for &c in &pr_channels {
            if c >= config.n || seen[c] {
                return Err(invalid_config(format!(
                    "channel {c} out of range or repeated"
                )));
            }
            seen[c] = true;
        }
        for cr in &cr_positions {
            for pr in &pr_positions {
                if distance(cr, pr) <= 0.0 {
                    return Err(Error::InvalidGeometry(
                        "a radio coincides with a primary transmitter".into(),
                    ));
                }
            }
        }
        Ok(Self {
            config,
            cr_positions,
            pr_positions,
            pr_channels,
            rng_seed,
        })
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn s(&self) -> usize {
        self.config.s
    }

    pub fn occupancy(&self) -> OccupancyVector {
        OccupancyVector::from_indices(self.config.n, &self.pr_channels)
            .expect("channels validated at construction")
    }
}

fn distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn uniform_square<R: Rng>(rng: &mut R, side: f64) -> [f64; 2] {
    let h = side / 2.0;
    [rng.random_range(-h..h), rng.random_range(-h..h)]
}

/// Places radios uniformly in the radio square and primary transmitters
/// uniformly in the (larger) transmitter square, both centered on the fusion
/// center, and assigns `s` distinct channels.
pub fn gen_scenario(config: &ScenarioConfig, seed: u64) -> Result<NetworkScenario> {
    config.validate()?;
    let mut rng = stream(seed, STREAM_GEOMETRY);
    let cr: Vec<[f64; 2]> = (0..config.m)
        .map(|_| uniform_square(&mut rng, config.cr_area))
        .collect();
    let pr: Vec<[f64; 2]> = (0..config.s)
        .map(|_| uniform_square(&mut rng, config.pr_area))
        .collect();
    let channels = sample(&mut rng, config.n, config.s).into_vec();
    NetworkScenario::from_parts(config.clone(), cr, pr, channels, seed)
}

/// `P * d^(-alpha/2) * |h|`.
pub fn path_gain(tx_power: f64, distance: f64, alpha: f64, fading_amplitude: f64) -> f64 {
    tx_power * distance.powf(-alpha / 2.0) * fading_amplitude
}

/// `m x n` power-gain matrix, linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    pub g: Mat<f64>,
}

/// Channel gains for every (radio, channel) pair.
///
/// Occupied channels use their primary transmitter's position. Idle
/// channels get a phantom transmitter position so that `G` is defined
/// everywhere; those columns are zeroed by `R` downstream.
pub fn gen_gain(scenario: &NetworkScenario) -> Result<GainMatrix> {
    let cfg = &scenario.config;
    let mut rng = stream(scenario.rng_seed, STREAM_GAIN);
    let mut tx: Vec<Option<[f64; 2]>> = vec![None; cfg.n];
    for (k, &c) in scenario.pr_channels.iter().enumerate() {
        tx[c] = Some(scenario.pr_positions[k]);
    }
    let tx: Vec<[f64; 2]> = tx
        .into_iter()
        .map(|t| t.unwrap_or_else(|| uniform_square(&mut rng, cfg.pr_area)))
        .collect();

    let mut g = Mat::zeros(cfg.m, cfg.n);
    for (j, pos) in tx.iter().enumerate() {
        for (i, cr) in scenario.cr_positions.iter().enumerate() {
            let d = distance(cr, pos);
            if d <= 0.0 {
                return Err(Error::InvalidGeometry(format!(
                    "radio {i} sits on the transmitter of channel {j}"
                )));
            }
            let h = cfg.fading.sample(&mut rng);
            g[(i, j)] = path_gain(cfg.tx_power, d, cfg.alpha, h);
        }
    }
    Ok(GainMatrix { g })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterLaw {
    /// Entries `N(0, 1/p)`.
    Gaussian,
    /// Entries `+-1/sqrt(p)` with equal probability.
    Bernoulli,
}

impl FilterLaw {
    pub fn name(&self) -> &'static str {
        match self {
            FilterLaw::Gaussian => "gaussian",
            FilterLaw::Bernoulli => "bernoulli",
        }
    }
}

/// Random `p x n` filter coefficient matrices, one shared bank or one per
/// radio.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<T> {
    banks: Vec<Mat<T>>,
    m: usize,
}

impl<T: Real> FilterBank<T> {
    pub fn shared(bank: Mat<T>, m: usize) -> Self {
        Self {
            banks: vec![bank],
            m,
        }
    }

    pub fn per_radio(banks: Vec<Mat<T>>) -> Result<Self> {
        let Some(first) = banks.first() else {
            return Err(invalid_input("at least one filter bank required"));
        };
        let shape = first.shape();
        if banks.iter().any(|b| b.shape() != shape) {
            return Err(invalid_input("filter banks must share one shape"));
        }
        let m = banks.len();
        Ok(Self { banks, m })
    }

    pub fn is_shared(&self) -> bool {
        self.banks.len() == 1
    }

    /// Filters per radio.
    pub fn p(&self) -> usize {
        self.banks[0].nrows()
    }

    pub fn n(&self) -> usize {
        self.banks[0].ncols()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Bank used by radio `j`.
    pub fn for_radio(&self, j: usize) -> &Mat<T> {
        if self.is_shared() {
            &self.banks[0]
        } else {
            &self.banks[j]
        }
    }

    /// The single shared bank, if any.
    pub fn shared_bank(&self) -> Option<&Mat<T>> {
        self.is_shared().then(|| &self.banks[0])
    }

    pub fn cast<U: Real>(&self) -> FilterBank<U> {
        FilterBank {
            banks: self.banks.iter().map(|b| b.cast()).collect(),
            m: self.m,
        }
    }
}

pub fn gen_filters(
    p: usize,
    n: usize,
    m: usize,
    shared: bool,
    law: FilterLaw,
    seed: u64,
) -> Result<FilterBank<f64>> {
    if p == 0 || p > n {
        return Err(invalid_config(format!(
            "filters per radio p = {p} must lie in 1..={n}"
        )));
    }
    if m == 0 {
        return Err(invalid_config("m must be at least 1"));
    }
    let mut rng = stream(seed, STREAM_FILTERS);
    let scale = 1.0 / (p as f64).sqrt();
    let gaussian = Normal::new(0.0, scale).unwrap();
    let draw = |rng: &mut ChaCha8Rng| match law {
        FilterLaw::Gaussian => Mat::from_fn(p, n, |_, _| gaussian.sample(rng)),
        FilterLaw::Bernoulli => {
            Mat::from_fn(
                p,
                n,
                |_, _| if rng.random::<bool>() { scale } else { -scale },
            )
        }
    };
    if shared {
        Ok(FilterBank::shared(draw(&mut rng), m))
    } else {
        let banks = (0..m).map(|_| draw(&mut rng)).collect();
        FilterBank::per_radio(banks)
    }
}

/// Additive measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    None,
    /// Per-entry standard deviation.
    Sigma(f64),
    /// Nominal SNR; sigma = RMS of the nonzero clean reports * 10^(-snr/20).
    SnrDb(f64),
}

/// Reports at the fusion center: a `p x m` matrix observed on a mask.
///
/// Unobserved entries hold zero in `values` and `false` in the mask; they
/// carry no information.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet<T> {
    values: Mat<T>,
    mask: Vec<bool>,
    pub noise_sigma: T,
    pub snr_db: Option<f64>,
}

impl<T: Real> MeasurementSet<T> {
    pub fn fully_observed(values: Mat<T>) -> Self {
        let mask = vec![true; values.nrows() * values.ncols()];
        Self {
            values,
            mask,
            noise_sigma: T::zero(),
            snr_db: None,
        }
    }

    /// `mask` is column-major, one flag per entry.
    pub fn with_mask(mut values: Mat<T>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != values.nrows() * values.ncols() {
            return Err(invalid_input("mask length must equal p * m"));
        }
        for (v, &keep) in values.as_mut_slice().iter_mut().zip(&mask) {
            if !keep {
                *v = T::zero();
            }
        }
        Ok(Self {
            values,
            mask,
            noise_sigma: T::zero(),
            snr_db: None,
        })
    }

    pub fn with_noise_sigma(mut self, sigma: T) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        self.mask[j * self.values.nrows() + i].then(|| self.values[(i, j)])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[j * self.values.nrows() + i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Observed entries with zeros elsewhere (`M^E`).
    pub fn zero_filled(&self) -> &Mat<T> {
        &self.values
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    pub fn observed_in_column(&self, j: usize) -> usize {
        let p = self.p();
        self.mask[j * p..(j + 1) * p].iter().filter(|&&b| b).count()
    }

    /// Received filter indices and values for radio `j`.
    pub fn column_observations(&self, j: usize) -> (Vec<usize>, Vec<T>) {
        let p = self.p();
        let col = self.values.col(j);
        let mask = &self.mask[j * p..(j + 1) * p];
        (0..p).filter(|&i| mask[i]).map(|i| (i, col[i])).unzip()
    }

    pub fn cast<U: Real>(&self) -> MeasurementSet<U> {
        MeasurementSet {
            values: self.values.cast(),
            mask: self.mask.clone(),
            noise_sigma: U::lit(self.noise_sigma.to_f64_lossy()),
            snr_db: self.snr_db,
        }
    }
}

/// Clean reports `M = F_j x_j` per radio, where `x_j = diag(R) G_{j,.}^T`.
pub fn clean_reports(
    filters: &FilterBank<f64>,
    occupancy: &OccupancyVector,
    gains: &GainMatrix,
) -> Result<Mat<f64>> {
    let n = filters.n();
    let m = filters.m();
    if occupancy.len() != n || gains.g.shape() != (m, n) {
        return Err(invalid_input(format!(
            "dimension mismatch: filters {}x{n} for {m} radios, occupancy {}, gains {:?}",
            filters.p(),
            occupancy.len(),
            gains.g.shape()
        )));
    }
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    if occupancy.is_occupied(i) {
                        gains.g[(j, i)]
                    } else {
                        0.0
                    }
                })
                .collect();
            filters.for_radio(j).mul_vec(&x)
        })
        .collect();
    Ok(Mat::from_columns(filters.p(), &columns))
}

/// Fully observed noisy reports.
pub fn sense(
    filters: &FilterBank<f64>,
    occupancy: &OccupancyVector,
    gains: &GainMatrix,
    noise: Noise,
    seed: u64,
) -> Result<MeasurementSet<f64>> {
    let clean = clean_reports(filters, occupancy, gains)?;
    let (sigma, snr_db) = match noise {
        Noise::None => (0.0, None),
        Noise::Sigma(s) => {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid_input("noise sigma must be >= 0"));
            }
            (s, None)
        }
        Noise::SnrDb(db) => {
            if !db.is_finite() {
                return Err(invalid_input("snr must be finite"));
            }
            (signal_rms(&clean) * 10f64.powf(-db / 20.0), Some(db))
        }
    };
    let mut values = clean;
    if sigma > 0.0 {
        let mut rng = stream(seed, STREAM_NOISE);
        let normal = Normal::new(0.0, sigma).unwrap();
        for v in values.as_mut_slice() {
            *v += normal.sample(&mut rng);
        }
    }
    let mut ms = MeasurementSet::fully_observed(values);
    ms.noise_sigma = sigma;
    ms.snr_db = snr_db;
    Ok(ms)
}

/// RMS over the nonzero entries; zero when there are none.
pub fn signal_rms(clean: &Mat<f64>) -> f64 {
    let (ss, count) = clean
        .as_slice()
        .iter()
        .filter(|v| **v != 0.0)
        .fold((0.0, 0usize), |(ss, c), v| (ss + v * v, c + 1));
    if count == 0 {
        0.0
    } else {
        (ss / count as f64).sqrt()
    }
}

/// Keeps each observed entry independently with probability `q`.
pub fn erase<T: Real>(ms: &MeasurementSet<T>, q: f64, seed: u64) -> Result<MeasurementSet<T>> {
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid_config(format!(
            "observation probability {q} outside [0, 1]"
        )));
    }
    let mut rng = stream(seed, STREAM_ERASURE);
    let mask: Vec<bool> = ms
        .mask
        .iter()
        .map(|&keep| {
            let u: f64 = rng.random();
            keep && u < q
        })
        .collect();
    let mut out = MeasurementSet::with_mask(ms.values.clone(), mask)?;
    out.noise_sigma = ms.noise_sigma;
    out.snr_db = ms.snr_db;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rank;

    fn cfg(n: usize, m: usize, s: usize) -> ScenarioConfig {
        ScenarioConfig {
            n,
            m,
            s,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn seeded_layout_is_reproducible() {
        let c = cfg(500, 20, 4);
        let a = gen_scenario(&c, 42).unwrap();
        let b = gen_scenario(&c, 42).unwrap();
        assert_eq!(a, b);
        let bits = |s: &NetworkScenario| -> Vec<u64> {
            s.cr_positions
                .iter()
                .flat_map(|p| p.iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(a, gen_scenario(&c, 43).unwrap());
    }

    #[test]
    fn small_scale_setup_and_placement_bounds() {
        for s in 1..=4 {
            let sc = gen_scenario(&cfg(35, 20, s), s as u64).unwrap();
            assert_eq!(sc.occupancy().popcount(), s);
            assert!(sc
                .cr_positions
                .iter()
                .all(|p| p[0].abs() <= 250.0 && p[1].abs() <= 250.0));
            assert!(sc
                .pr_positions
                .iter()
                .all(|p| p[0].abs() <= 500.0 && p[1].abs() <= 500.0));
            let mut ch = sc.pr_channels.clone();
            ch.sort();
            ch.dedup();
            assert_eq!(ch.len(), s);
        }
    }

    #[test]
    fn empty_occupancy_and_bad_counts() {
        let sc = gen_scenario(&cfg(10, 3, 0), 1).unwrap();
        assert_eq!(sc.occupancy().popcount(), 0);
        assert!(matches!(
            gen_scenario(&cfg(3, 2, 4), 1),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn path_gain_unit_cases() {
        assert_eq!(path_gain(1.0, 1.0, 2.0, 1.0), 1.0);
        assert!((path_gain(1.0, 100.0, 3.0, 1.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_distance_is_rejected() {
        let c = cfg(4, 1, 1);
        let err = NetworkScenario::from_parts(c, vec![[1.0, 1.0]], vec![[1.0, 1.0]], vec![2], 0);
        assert!(matches!(err, Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn awgn_gain_matches_formula() {
        let c = ScenarioConfig {
            alpha: 2.0,
            ..cfg(3, 2, 1)
        };
        let sc = NetworkScenario::from_parts(
            c,
            vec![[0.0, 0.0], [3.0, 4.0]],
            vec![[0.0, 1.0]],
            vec![1],
            9,
        )
        .unwrap();
        let g = gen_gain(&sc).unwrap();
        assert_eq!(g.g[(0, 1)], 1.0);
        let d = (3.0f64).hypot(3.0);
        assert!((g.g[(1, 1)] - 1.0 / d).abs() < 1e-15);
        assert!(g.g.as_slice().iter().all(|v| *v > 0.0 && v.is_finite()));
    }

    #[test]
    fn filter_law_and_determinism() {
        let a = gen_filters(8, 20, 3, true, FilterLaw::Gaussian, 5).unwrap();
        assert_eq!(
            a,
            gen_filters(8, 20, 3, true, FilterLaw::Gaussian, 5).unwrap()
        );
        assert!(a.is_shared());
        let b = gen_filters(4, 10, 3, false, FilterLaw::Bernoulli, 5).unwrap();
        assert!(!b.is_shared());
        assert_ne!(b.for_radio(0), b.for_radio(1));
        assert!(b
            .for_radio(2)
            .as_slice()
            .iter()
            .all(|v| (v.abs() - 0.5).abs() < 1e-15));
        assert!(gen_filters(11, 10, 1, true, FilterLaw::Gaussian, 0).is_err());
        assert!(gen_filters(0, 10, 1, true, FilterLaw::Gaussian, 0).is_err());
    }

    #[test]
    fn square_bank_is_full_rank() {
        let f = gen_filters(12, 12, 1, true, FilterLaw::Gaussian, 77).unwrap();
        assert_eq!(rank(f.for_radio(0)).unwrap(), 12);
    }

    #[test]
    fn empty_spectrum_reports_are_zero() {
        let sc = gen_scenario(&cfg(20, 4, 0), 3).unwrap();
        let g = gen_gain(&sc).unwrap();
        let f = gen_filters(5, 20, 4, true, FilterLaw::Gaussian, 3).unwrap();
        let ms = sense(&f, &sc.occupancy(), &g, Noise::None, 3).unwrap();
        assert_eq!(ms.zero_filled().max_abs(), 0.0);
        let noisy = sense(&f, &sc.occupancy(), &g, Noise::SnrDb(10.0), 3).unwrap();
        assert_eq!(noisy.noise_sigma, 0.0);
    }

    #[test]
    fn single_user_reports_are_outer_product() {
        let sc = gen_scenario(&cfg(20, 5, 1), 8).unwrap();
        let g = gen_gain(&sc).unwrap();
        let f = gen_filters(6, 20, 5, true, FilterLaw::Gaussian, 8).unwrap();
        let ms = sense(&f, &sc.occupancy(), &g, Noise::None, 8).unwrap();
        let k = sc.pr_channels[0];
        let fk = f.for_radio(0).select_cols(&[k]);
        let gk = Mat::from_fn(1, 5, |_, j| g.g[(j, k)]);
        let expected = fk.matmul(&gk);
        assert!(ms.zero_filled().sub(&expected).max_abs() <= 1e-15 * expected.max_abs().max(1.0));
        assert_eq!(rank(ms.zero_filled()).unwrap(), 1);
    }

    #[test]
    fn noise_level_follows_snr() {
        let sc = gen_scenario(&cfg(50, 10, 3), 4).unwrap();
        let g = gen_gain(&sc).unwrap();
        let f = gen_filters(20, 50, 10, true, FilterLaw::Gaussian, 4).unwrap();
        let clean = clean_reports(&f, &sc.occupancy(), &g).unwrap();
        let ms = sense(&f, &sc.occupancy(), &g, Noise::SnrDb(20.0), 4).unwrap();
        assert!((ms.noise_sigma - signal_rms(&clean) * 0.1).abs() < 1e-15);
        assert_eq!(ms.snr_db, Some(20.0));
        assert!(ms.zero_filled().sub(&clean).max_abs() > 0.0);
    }

    #[test]
    fn erasure_edges() {
        let ms = MeasurementSet::fully_observed(Mat::<f64>::from_fn(10, 10, |i, j| (i + j) as f64));
        assert_eq!(erase(&ms, 1.0, 1).unwrap().observed_count(), 100);
        let none = erase(&ms, 0.0, 1).unwrap();
        assert_eq!(none.observed_count(), 0);
        assert_eq!(none.zero_filled().max_abs(), 0.0);
        assert!(erase(&ms, 1.5, 1).is_err());
        assert!(erase(&ms, -0.1, 1).is_err());
        let half = erase(&ms, 0.5, 2).unwrap();
        let (rows, vals) = half.column_observations(3);
        assert_eq!(rows.len(), half.observed_in_column(3));
        for (r, v) in rows.iter().zip(vals) {
            assert_eq!(half.get(*r, 3), Some(v));
        }
    }
}
