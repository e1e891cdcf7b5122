//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored,
//! later settings override earlier ones, unknown keys are rejected. Lists are
//! comma-separated. [`dump`] prints every key with its resolved value in a
//! form that [`parse`] reads back to the identical configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::completion::TauSchedule;
use crate::error::{Error, Result};
use crate::harness::{DecoderChoice, ExperimentConfig, SamplingMode};
use crate::scenario::{Fading, FilterLaw};

/// Every accepted key, in the order settings are applied and dumped.
pub const KEYS: &[&str] = &[
    "n",
    "m",
    "s_list",
    "fading",
    "shadow_db",
    "alpha",
    "tx_power",
    "cr_area",
    "pr_area",
    "decoder",
    "rate_list",
    "snr_list",
    "trials",
    "seed",
    "q_nominal",
    "fixed_p",
    "filter_law",
    "threads",
    "timing",
    "mtol",
    "delta",
    "tau_start",
    "tau_final",
    "tau_eta",
    "fpca_max_iters",
    "rank_budget",
    "qualify_factor",
    "tail_tol",
    "max_outer_iters",
    "trust_eps",
    "peak_frac",
    "vote_threshold",
    "p_norm",
    "decode_tail_tol",
    "decode_max_iters",
    "fit_tol",
    "decode_fit_tol",
];

/// A setting and where it came from, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: String,
}

/// Maps shorthands (`s`, `rate`, `snr`, dashes) to canonical keys.
pub fn canonical_key(key: &str) -> String {
    let k = key.trim().replace('-', "_");
    match k.as_str() {
        "s" => "s_list".into(),
        "rate" | "rates" => "rate_list".into(),
        "snr" => "snr_list".into(),
        _ => k,
    }
}

/// Splits config text into entries; rejects malformed lines and unknown keys.
pub fn parse_entries(text: &str, source: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let origin = format!("{source}:{}", idx + 1);
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "{origin}: expected `key = value`, got `{line}`"
            )));
        };
        let key = canonical_key(k);
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "{origin}: unknown key `{}`",
                k.trim()
            )));
        }
        out.push(Entry {
            key,
            value: v.trim().to_string(),
            origin,
        });
    }
    Ok(out)
}

/// Parses config text on top of the defaults.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    resolve(&parse_entries(text, "config")?)
}

/// Applies entries (later wins) on top of the defaults and validates.
pub fn resolve(entries: &[Entry]) -> Result<ExperimentConfig> {
    let mut latest: BTreeMap<&str, &Entry> = BTreeMap::new();
    for e in entries {
        let key = KEYS.iter().find(|k| **k == e.key).ok_or_else(|| {
            Error::InvalidConfig(format!("{}: unknown key `{}`", e.origin, e.key))
        })?;
        latest.insert(key, e);
    }
    let mut cfg = ExperimentConfig::default();
    for key in KEYS {
        if let Some(e) = latest.get(key) {
            apply(&mut cfg, key, &e.value)
                .map_err(|msg| Error::InvalidConfig(format!("{}: `{key}`: {msg}", e.origin)))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.trim()
        .parse::<T>()
        .map_err(|_| format!("cannot parse `{}`", v.trim()))
}

fn list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    let items: Vec<&str> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err("empty list".into());
    }
    items.into_iter().map(num).collect()
}

fn auto_or<T: std::str::FromStr>(v: &str, word: &str) -> std::result::Result<Option<T>, String> {
    if v.trim().eq_ignore_ascii_case(word) {
        Ok(None)
    } else {
        num(v).map(Some)
    }
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(format!("expected true/false, got `{other}`")),
    }
}

fn schedule_mut(cfg: &mut ExperimentConfig) -> (&mut f64, &mut f64, &mut f64) {
    if !matches!(cfg.fpca.schedule, TauSchedule::Relative { .. }) {
        cfg.fpca.schedule = TauSchedule::Relative {
            start: 0.5,
            end: 1e-6,
            eta: 0.25,
        };
    }
    match &mut cfg.fpca.schedule {
        TauSchedule::Relative { start, end, eta } => (start, end, eta),
        TauSchedule::Explicit(_) => unreachable!("schedule reset above"),
    }
}

fn apply(cfg: &mut ExperimentConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    match key {
        "n" => cfg.scenario.n = num(v)?,
        "m" => cfg.scenario.m = num(v)?,
        "s_list" => cfg.s_list = list(v)?,
        "fading" => {
            cfg.scenario.fading = match v.to_ascii_lowercase().as_str() {
                "awgn" => Fading::Awgn,
                "rayleigh" => Fading::Rayleigh,
                "lognormal" => Fading::LogNormal {
                    sigma_db: Fading::DEFAULT_SHADOW_DB,
                },
                other => {
                    return Err(format!(
                        "unknown fading `{other}` (awgn, rayleigh, lognormal)"
                    ))
                }
            }
        }
        "shadow_db" => {
            let db: f64 = num(v)?;
            if let Fading::LogNormal { sigma_db } = &mut cfg.scenario.fading {
                *sigma_db = db;
            }
        }
        "alpha" => cfg.scenario.alpha = num(v)?,
        "tx_power" => cfg.scenario.tx_power = num(v)?,
        "cr_area" => cfg.scenario.cr_area = num(v)?,
        "pr_area" => cfg.scenario.pr_area = num(v)?,
        "decoder" => {
            cfg.decoder = match v.to_ascii_lowercase().as_str() {
                "completion" => DecoderChoice::Completion,
                "jointsparse" => DecoderChoice::JointSparse,
                "both" => DecoderChoice::Both,
                other => {
                    return Err(format!(
                        "unknown decoder `{other}` (completion, jointsparse, both)"
                    ))
                }
            }
        }
        "rate_list" => cfg.rate_list = list(v)?,
        "snr_list" => {
            let items: Vec<&str> = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            if items.is_empty() {
                return Err("empty list".into());
            }
            cfg.snr_list = items
                .into_iter()
                .map(|s| auto_or::<f64>(s, "noiseless"))
                .collect::<std::result::Result<_, _>>()?;
        }
        "trials" => cfg.trials = num(v)?,
        "seed" => cfg.seed = num(v)?,
        "q_nominal" => {
            let q = num(v)?;
            if let SamplingMode::FixedQ { q_nominal } = &mut cfg.sampling {
                *q_nominal = q;
            }
        }
        "fixed_p" => {
            cfg.sampling = match auto_or::<usize>(v, "auto")? {
                Some(p) => SamplingMode::FixedP { p },
                None => match cfg.sampling {
                    s @ SamplingMode::FixedQ { .. } => s,
                    SamplingMode::FixedP { .. } => SamplingMode::FixedQ { q_nominal: 0.9 },
                },
            }
        }
        "filter_law" => {
            cfg.filter_law = match v.to_ascii_lowercase().as_str() {
                "gaussian" => FilterLaw::Gaussian,
                "bernoulli" => FilterLaw::Bernoulli,
                other => {
                    return Err(format!(
                        "unknown filter law `{other}` (gaussian, bernoulli)"
                    ))
                }
            }
        }
        "threads" => cfg.threads = num(v)?,
        "timing" => cfg.timing = boolean(v)?,
        "mtol" => cfg.fpca.mtol = num(v)?,
        "delta" => cfg.fpca.delta = num(v)?,
        "tau_start" => *schedule_mut(cfg).0 = num(v)?,
        "tau_final" => *schedule_mut(cfg).1 = num(v)?,
        "tau_eta" => *schedule_mut(cfg).2 = num(v)?,
        "fpca_max_iters" => cfg.fpca.max_iters = num(v)?,
        "rank_budget" => cfg.fpca.rank_budget = auto_or(v, "full")?,
        "qualify_factor" => cfg.joint.qualify_factor = num(v)?,
        "tail_tol" => cfg.joint.tail_tol = auto_or(v, "auto")?,
        "max_outer_iters" => cfg.joint.max_outer_iters = auto_or(v, "auto")?,
        "trust_eps" => {
            cfg.joint.trust_eps = num(v)?;
            cfg.decode.trust_eps = cfg.joint.trust_eps;
        }
        "peak_frac" => {
            cfg.joint.peak_frac = num(v)?;
            cfg.decode.peak_frac = cfg.joint.peak_frac;
        }
        "vote_threshold" => {
            cfg.joint.vote_threshold = num(v)?;
            cfg.decode.vote_threshold = cfg.joint.vote_threshold;
        }
        "p_norm" => {
            cfg.joint.p_norm = num(v)?;
            cfg.decode.p_norm = cfg.joint.p_norm;
        }
        "decode_tail_tol" => cfg.decode.tail_tol = auto_or(v, "auto")?,
        "decode_max_iters" => cfg.decode.max_outer_iters = Some(num(v)?),
        "fit_tol" => cfg.joint.fit_tol = num(v)?,
        "decode_fit_tol" => cfg.decode.fit_tol = num(v)?,
        other => return Err(format!("unknown key `{other}`")),
    }
    Ok(())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn opt<T: ToString>(v: &Option<T>, word: &str) -> String {
    v.as_ref()
        .map_or_else(|| word.to_string(), ToString::to_string)
}

/// Every key with its value in `cfg`, in [`KEYS`] order.
pub fn pairs(cfg: &ExperimentConfig) -> Vec<(&'static str, String)> {
    let sc = &cfg.scenario;
    let (tau_start, tau_final, tau_eta) = match &cfg.fpca.schedule {
        TauSchedule::Relative { start, end, eta } => (*start, *end, *eta),
        TauSchedule::Explicit(_) => (0.5, 1e-6, 0.25),
    };
    let shadow = match sc.fading {
        Fading::LogNormal { sigma_db } => sigma_db,
        _ => Fading::DEFAULT_SHADOW_DB,
    };
    let (q_nominal, fixed_p) = match cfg.sampling {
        SamplingMode::FixedQ { q_nominal } => (q_nominal, None),
        SamplingMode::FixedP { p } => (0.9, Some(p)),
    };
    let snr: Vec<String> = cfg.snr_list.iter().map(|s| opt(s, "noiseless")).collect();
    vec![
        ("n", sc.n.to_string()),
        ("m", sc.m.to_string()),
        ("s_list", join(&cfg.s_list)),
        ("fading", sc.fading.name().to_string()),
        ("shadow_db", shadow.to_string()),
        ("alpha", sc.alpha.to_string()),
        ("tx_power", sc.tx_power.to_string()),
        ("cr_area", sc.cr_area.to_string()),
        ("pr_area", sc.pr_area.to_string()),
        ("decoder", cfg.decoder.name().to_string()),
        ("rate_list", join(&cfg.rate_list)),
        ("snr_list", snr.join(", ")),
        ("trials", cfg.trials.to_string()),
        ("seed", cfg.seed.to_string()),
        ("q_nominal", q_nominal.to_string()),
        ("fixed_p", opt(&fixed_p, "auto")),
        ("filter_law", cfg.filter_law.name().to_string()),
        ("threads", cfg.threads.to_string()),
        ("timing", cfg.timing.to_string()),
        ("mtol", cfg.fpca.mtol.to_string()),
        ("delta", cfg.fpca.delta.to_string()),
        ("tau_start", tau_start.to_string()),
        ("tau_final", tau_final.to_string()),
        ("tau_eta", tau_eta.to_string()),
        ("fpca_max_iters", cfg.fpca.max_iters.to_string()),
        ("rank_budget", opt(&cfg.fpca.rank_budget, "full")),
        ("qualify_factor", cfg.joint.qualify_factor.to_string()),
        ("tail_tol", opt(&cfg.joint.tail_tol, "auto")),
        ("max_outer_iters", opt(&cfg.joint.max_outer_iters, "auto")),
        ("trust_eps", cfg.joint.trust_eps.to_string()),
        ("peak_frac", cfg.joint.peak_frac.to_string()),
        ("vote_threshold", cfg.joint.vote_threshold.to_string()),
        ("p_norm", cfg.joint.p_norm.to_string()),
        ("decode_tail_tol", opt(&cfg.decode.tail_tol, "auto")),
        (
            "decode_max_iters",
            cfg.decode
                .max_outer_iters
                .unwrap_or(crate::completion::DECODE_MAX_ITERS)
                .to_string(),
        ),
        ("fit_tol", cfg.joint.fit_tol.to_string()),
        ("decode_fit_tol", cfg.decode.fit_tol.to_string()),
    ]
}

/// The configuration as config-file text.
pub fn dump(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    for (k, v) in pairs(cfg) {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// Reproducibility record: the resolved configuration (itself a valid config
/// file), preceded by the artifact version and master seed as comments.
pub fn manifest(cfg: &ExperimentConfig, version: &str) -> String {
    format!(
        "# specsense {version}\n# master seed {}\n{}",
        cfg.seed,
        dump(cfg)
    )
}
