//! Monte Carlo experiment driver: generates networks and reports, runs the
//! decoders, and scores their occupancy estimates.
//!
//! Every trial derives its seed from the master seed, the experiment cell and
//! the trial index, so results do not depend on execution order or thread
//! count, and the generated data does not depend on which decoders run.

use std::fmt::Write as _;
use std::time::Instant;

use num_rational::Ratio;

use crate::completion::{decode_occupancy, fpca_complete, FpcaParams};
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::jointsparse::{joint_recover, SolverParams};
use crate::scenario::{
    erase, gen_filters, gen_gain, gen_scenario, sense, FilterLaw, Noise, OccupancyVector,
    ScenarioConfig,
};

/// Confusion counts of one occupancy estimate and the derived rates.
///
/// `pod = hit / (hit + miss)`, `far = false / (false + hit)`,
/// `mdr = miss / (miss + correct)`. A rate whose denominator is zero is
/// reported as `0` and flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutcome {
    pub n_hit: u64,
    pub n_miss: u64,
    pub n_false: u64,
    pub n_correct: u64,
    pub pod: f64,
    pub far: f64,
    pub mdr: f64,
    pub flags: Vec<&'static str>,
}

impl DetectionOutcome {
    pub fn pod_exact(&self) -> Ratio<u64> {
        ratio(self.n_hit, self.n_hit + self.n_miss)
    }

    pub fn far_exact(&self) -> Ratio<u64> {
        ratio(self.n_false, self.n_false + self.n_hit)
    }

    pub fn mdr_exact(&self) -> Ratio<u64> {
        ratio(self.n_miss, self.n_miss + self.n_correct)
    }

    pub fn total(&self) -> u64 {
        self.n_hit + self.n_miss + self.n_false + self.n_correct
    }
}

fn ratio(num: u64, den: u64) -> Ratio<u64> {
    if den == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(num, den)
    }
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn compute_metrics(
    truth: &OccupancyVector,
    estimate: &OccupancyVector,
) -> Result<DetectionOutcome> {
    if truth.len() != estimate.len() {
        return Err(invalid_input(format!(
            "occupancy lengths differ: truth {}, estimate {}",
            truth.len(),
            estimate.len()
        )));
    }
    let (mut hit, mut miss, mut fa, mut correct) = (0u64, 0u64, 0u64, 0u64);
    for (&t, &e) in truth.states().iter().zip(estimate.states()) {
        match (t, e) {
            (true, true) => hit += 1,
            (true, false) => miss += 1,
            (false, true) => fa += 1,
            (false, false) => correct += 1,
        }
    }
    let mut flags = Vec::new();
    if hit + miss == 0 {
        flags.push("pod_undefined");
    }
    if fa + hit == 0 {
        flags.push("far_undefined");
    }
    if miss + correct == 0 {
        flags.push("mdr_undefined");
    }
    let mut out = DetectionOutcome {
        n_hit: hit,
        n_miss: miss,
        n_false: fa,
        n_correct: correct,
        pod: 0.0,
        far: 0.0,
        mdr: 0.0,
        flags,
    };
    out.pod = ratio_f64(out.pod_exact());
    out.far = ratio_f64(out.far_exact());
    out.mdr = ratio_f64(out.mdr_exact());
    Ok(out)
}

/// Received measurements per traditional per-channel sensing workload:
/// `|E| / (n m)`.
pub fn sampling_rate(mask: &[bool], n: usize, m: usize) -> f64 {
    ratio_f64(sampling_rate_exact(mask, n, m))
}

pub fn sampling_rate_exact(mask: &[bool], n: usize, m: usize) -> Ratio<u64> {
    let received = mask.iter().filter(|&&b| b).count() as u64;
    ratio(received, (n * m) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoder {
    Completion,
    JointSparse,
}

impl Decoder {
    pub fn name(&self) -> &'static str {
        match self {
            Decoder::Completion => "completion",
            Decoder::JointSparse => "jointsparse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderChoice {
    Completion,
    JointSparse,
    Both,
}

impl DecoderChoice {
    pub fn decoders(&self) -> &'static [Decoder] {
        match self {
            DecoderChoice::Completion => &[Decoder::Completion],
            DecoderChoice::JointSparse => &[Decoder::JointSparse],
            DecoderChoice::Both => &[Decoder::Completion, Decoder::JointSparse],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DecoderChoice::Completion => "completion",
            DecoderChoice::JointSparse => "jointsparse",
            DecoderChoice::Both => "both",
        }
    }
}

/// How a target sampling rate is split into filters per radio `p` and the
/// report survival probability `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingMode {
    /// `p = min(n, ceil(rate n / q_nominal))`, `q = rate n / p`.
    FixedQ { q_nominal: f64 },
    /// Fixed `p`, `q = rate n / p`.
    FixedP { p: usize },
}

/// `(p, q)` realizing `rate` in expectation.
pub fn split_rate(rate: f64, n: usize, mode: SamplingMode) -> Result<(usize, f64)> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(invalid_config(format!(
            "sampling rate {rate} outside (0, 1]"
        )));
    }
    let target = rate * n as f64;
    let p = match mode {
        SamplingMode::FixedQ { q_nominal } => {
            if !(q_nominal > 0.0 && q_nominal <= 1.0) {
                return Err(invalid_config(format!(
                    "q_nominal {q_nominal} outside (0, 1]"
                )));
            }
            let raw = (target / q_nominal - 1e-9).ceil().max(1.0) as usize;
            raw.min(n)
        }
        SamplingMode::FixedP { p } => {
            if p == 0 || p > n {
                return Err(invalid_config(format!("fixed p = {p} outside 1..={n}")));
            }
            p
        }
    };
    let q = target / p as f64;
    if q > 1.0 + 1e-12 {
        return Err(invalid_config(format!(
            "sampling rate {rate} needs more than p = {p} reports per radio"
        )));
    }
    Ok((p, q.min(1.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Geometry, propagation and fading; `s` is taken from `s_list`.
    pub scenario: ScenarioConfig,
    pub s_list: Vec<usize>,
    pub decoder: DecoderChoice,
    pub rate_list: Vec<f64>,
    /// `None` is the noiseless case; otherwise the SNR in dB.
    pub snr_list: Vec<Option<f64>>,
    pub trials: usize,
    pub seed: u64,
    pub sampling: SamplingMode,
    pub filter_law: FilterLaw,
    pub fpca: FpcaParams<f64>,
    /// Parameters of the joint detection loop.
    pub joint: SolverParams<f64>,
    /// Parameters of the decode after completion.
    pub decode: SolverParams<f64>,
    /// Worker threads; `0` picks the available parallelism.
    pub threads: usize,
    /// Record wall-clock time per trial (makes output nondeterministic).
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            s_list: vec![1, 2, 3, 4],
            decoder: DecoderChoice::Both,
            rate_list: vec![0.2, 0.3, 0.4, 0.5],
            snr_list: vec![None],
            trials: 200,
            seed: 1,
            sampling: SamplingMode::FixedQ { q_nominal: 0.9 },
            filter_law: FilterLaw::Gaussian,
            fpca: FpcaParams::default(),
            joint: SolverParams::default(),
            decode: crate::completion::decode_params(),
            threads: 0,
            timing: false,
        }
    }
}

/// One `(rate, s, snr)` grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub exp_id: usize,
    pub rate: f64,
    pub s: usize,
    pub snr_db: Option<f64>,
    pub p: usize,
    pub q: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_list.is_empty() || self.rate_list.is_empty() || self.snr_list.is_empty() {
            return Err(invalid_config(
                "s_list, rate_list and snr_list must be nonempty",
            ));
        }
        if self.trials == 0 {
            return Err(invalid_config("trials must be at least 1"));
        }
        for &s in &self.s_list {
            ScenarioConfig {
                s,
                ..self.scenario.clone()
            }
            .validate()?;
        }
        for snr in self.snr_list.iter().flatten() {
            if !snr.is_finite() {
                return Err(invalid_config("snr values must be finite"));
            }
        }
        self.fpca.validate()?;
        self.joint.validate()?;
        self.decode.validate()?;
        self.cells().map(|_| ())
    }

    /// Grid cells in `rate`-major, then `s`, then `snr` order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut out = Vec::new();
        for &rate in &self.rate_list {
            let (p, q) = split_rate(rate, self.scenario.n, self.sampling)?;
            for &s in &self.s_list {
                for &snr_db in &self.snr_list {
                    out.push(Cell {
                        exp_id: out.len(),
                        rate,
                        s,
                        snr_db,
                        p,
                        q,
                    });
                }
            }
        }
        Ok(out)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` in cell `exp_id`: a splitmix64 chain over the
/// master seed, the cell and the trial index.
pub fn trial_seed(master: u64, exp_id: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ exp_id as u64) ^ trial as u64)
}

/// One decoder run on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub exp_id: usize,
    pub trial: usize,
    pub decoder: Decoder,
    pub fading: &'static str,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub s: usize,
    pub q: f64,
    /// Realized `|E| / (n m)`.
    pub sampling_rate: f64,
    pub snr_db: Option<f64>,
    pub outcome: DetectionOutcome,
    /// Outer detection iterations.
    pub iters: usize,
    pub runtime_ms: Option<f64>,
    /// Metric flags plus `not_converged` / `decode_failure`.
    pub flags: Vec<String>,
    /// Error text when decoding failed.
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn decode_failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Mean and standard error of a metric over the trials of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Self {
        let k = values.len();
        if k == 0 {
            return Self {
                mean: 0.0,
                std_err: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        if k == 1 {
            return Self { mean, std_err: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        Self {
            mean,
            std_err: (var / k as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: Cell,
    pub decoder: Decoder,
    pub trials: usize,
    pub pod: Estimate,
    pub far: Estimate,
    pub mdr: Estimate,
    /// Trials whose POD was defined (truth had occupied channels).
    pub pod_trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub cells: Vec<Cell>,
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<CellSummary>,
}

impl ExperimentResult {
    pub fn any_decode_failure(&self) -> bool {
        self.records.iter().any(TrialRecord::decode_failed)
    }

    pub fn summary(&self, exp_id: usize, decoder: Decoder) -> Option<&CellSummary> {
        self.summaries
            .iter()
            .find(|s| s.cell.exp_id == exp_id && s.decoder == decoder)
    }
}

/// Runs every cell of the grid for `config.trials` trials and every selected
/// decoder.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let cells = config.cells()?;
    let jobs: Vec<(Cell, usize)> = cells
        .iter()
        .flat_map(|&c| (0..config.trials).map(move |t| (c, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| invalid_config(format!("thread pool: {e}")))?;
    let per_job: Vec<Result<Vec<TrialRecord>>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(cell, trial)| run_trial(config, cell, trial))
            .collect()
    });
    let mut records = Vec::with_capacity(jobs.len() * config.decoder.decoders().len());
    for r in per_job {
        records.extend(r?);
    }
    let summaries = summarize(&cells, &records, config.decoder.decoders());
    Ok(ExperimentResult {
        cells,
        records,
        summaries,
    })
}

/// Generates one trial's data and runs every selected decoder on it.
pub fn run_trial(config: &ExperimentConfig, cell: Cell, trial: usize) -> Result<Vec<TrialRecord>> {
    let seed = trial_seed(config.seed, cell.exp_id, trial);
    let scfg = ScenarioConfig {
        s: cell.s,
        ..config.scenario.clone()
    };
    let n = scfg.n;
    let m = scfg.m;
    let scenario = gen_scenario(&scfg, seed)?;
    let gains = gen_gain(&scenario)?;
    let filters = gen_filters(cell.p, n, m, true, config.filter_law, seed)?;
    let noise = cell.snr_db.map_or(Noise::None, Noise::SnrDb);
    let full = sense(&filters, &scenario.occupancy(), &gains, noise, seed)?;
    let ms = erase(&full, cell.q, seed)?;
    let truth = scenario.occupancy();
    let realized = sampling_rate(ms.mask(), n, m);

    let mut out = Vec::new();
    for &decoder in config.decoder.decoders() {
        let start = config.timing.then(Instant::now);
        let decoded = match decoder {
            Decoder::Completion => fpca_complete(&ms, &config.fpca).and_then(|c| {
                let params = SolverParams {
                    noise_sigma: ms.noise_sigma,
                    ..config.decode.clone()
                };
                decode_occupancy(&c, &filters, &params).map(|o| (o, c.converged))
            }),
            Decoder::JointSparse => {
                let params = SolverParams {
                    noise_sigma: ms.noise_sigma,
                    ..config.joint.clone()
                };
                joint_recover(&ms, &filters, &params).map(|o| (o, true))
            }
        };
        let runtime_ms = start.map(|t| t.elapsed().as_secs_f64() * 1e3);
        let (estimate, iters, mut flags, error) = match decoded {
            Ok((o, completion_ok)) => {
                let mut flags = Vec::new();
                if !o.converged || !completion_ok {
                    flags.push("not_converged".to_string());
                }
                let iters = o.iterations();
                (o.occupancy, iters, flags, None)
            }
            Err(
                e @ (Error::DecodeFailure(_)
                | Error::Unrecoverable(_)
                | Error::Infeasible(_)
                | Error::Numerical(_)),
            ) => (
                OccupancyVector::empty(n),
                0,
                vec!["decode_failure".to_string()],
                Some(e.to_string()),
            ),
            Err(e) => return Err(e),
        };
        let outcome = compute_metrics(&truth, &estimate)?;
        let mut all: Vec<String> = outcome.flags.iter().map(|s| s.to_string()).collect();
        all.append(&mut flags);
        out.push(TrialRecord {
            exp_id: cell.exp_id,
            trial,
            decoder,
            fading: scfg.fading.name(),
            n,
            m,
            p: cell.p,
            s: cell.s,
            q: cell.q,
            sampling_rate: realized,
            snr_db: cell.snr_db,
            outcome,
            iters,
            runtime_ms,
            flags: all,
            error,
        });
    }
    Ok(out)
}

fn summarize(cells: &[Cell], records: &[TrialRecord], decoders: &[Decoder]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for cell in cells {
        for &d in decoders {
            let rows: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.exp_id == cell.exp_id && r.decoder == d)
                .collect();
            let defined = |flag: &str| -> Vec<&TrialRecord> {
                rows.iter()
                    .copied()
                    .filter(|r| !r.outcome.flags.contains(&flag))
                    .collect()
            };
            let pod_rows = defined("pod_undefined");
            let pod: Vec<f64> = pod_rows.iter().map(|r| r.outcome.pod).collect();
            let far: Vec<f64> = rows.iter().map(|r| r.outcome.far).collect();
            let mdr: Vec<f64> = rows.iter().map(|r| r.outcome.mdr).collect();
            out.push(CellSummary {
                cell: *cell,
                decoder: d,
                trials: rows.len(),
                pod: Estimate::of(&pod),
                far: Estimate::of(&far),
                mdr: Estimate::of(&mdr),
                pod_trials: pod.len(),
                failures: rows.iter().filter(|r| r.decode_failed()).count(),
            });
        }
    }
    out
}

pub const CSV_HEADER: &str = "exp_id,trial,decoder,fading,n,m,p,s,q,sampling_rate,snr_db,pod,far,mdr,hits,misses,falses,corrects,iters,runtime_ms,flags";

/// Per-trial rows as CSV: header first, `.` decimals, LF line endings.
/// Noiseless rows leave `snr_db` empty; `runtime_ms` is empty unless timing
/// was requested; `flags` joins with `|`.
pub fn results_csv(records: &[TrialRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let o = &r.outcome;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.exp_id,
            r.trial,
            r.decoder.name(),
            r.fading,
            r.n,
            r.m,
            r.p,
            r.s,
            r.q,
            r.sampling_rate,
            r.snr_db.map(|v| v.to_string()).unwrap_or_default(),
            o.pod,
            o.far,
            o.mdr,
            o.n_hit,
            o.n_miss,
            o.n_false,
            o.n_correct,
            r.iters,
            r.runtime_ms.map(|v| format!("{v:.3}")).unwrap_or_default(),
            r.flags.join("|"),
        );
    }
    s
}

/// Per-cell means with standard errors as CSV.
pub fn summary_csv(summaries: &[CellSummary]) -> String {
    let mut s = String::from(
        "exp_id,decoder,rate,p,q,s,snr_db,trials,pod_mean,pod_se,far_mean,far_se,mdr_mean,mdr_se,pod_trials,failures\n",
    );
    for c in summaries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.cell.exp_id,
            c.decoder.name(),
            c.cell.rate,
            c.cell.p,
            c.cell.q,
            c.cell.s,
            c.cell.snr_db.map(|v| v.to_string()).unwrap_or_default(),
            c.trials,
            c.pod.mean,
            c.pod.std_err,
            c.far.mean,
            c.far.std_err,
            c.mdr.mean,
            c.mdr.std_err,
            c.pod_trials,
            c.failures,
        );
    }
    s
}
