//! `specsense run [CONFIG] [--key value ...]`: runs a Monte Carlo sensing
//! experiment and writes `results.csv`, `summary.csv` and `manifest.txt`.
//!
//! Every configuration key is also accepted as a `--key value` override,
//! applied after the config file. Exit status: 0 on success, 1 on a
//! configuration or I/O error, 2 when any trial failed to decode (unless
//! `--keep-going`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use specsense::config::{self, Entry, KEYS};
use specsense::harness::{results_csv, run_experiment, summary_csv, ExperimentResult};
use specsense::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_DECODE: u8 = 2;

fn command() -> Command {
    let mut run = Command::new("run")
        .about("Run an experiment grid and write results.csv and manifest.txt")
        .arg(
            Arg::new("config")
                .value_name("CONFIG")
                .help("Flat `key = value` config file"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("DIR")
                .default_value(".")
                .help("Output directory"),
        )
        .arg(
            Arg::new("keep-going")
                .long("keep-going")
                .action(ArgAction::SetTrue)
                .help("Exit 0 even if some trials fail to decode"),
        )
        .arg(
            Arg::new("dump-defaults")
                .long("dump-defaults")
                .action(ArgAction::SetTrue)
                .help("Print the resolved configuration and exit"),
        );
    for &key in KEYS {
        let mut arg = Arg::new(key)
            .long(key)
            .value_name("VALUE")
            .action(ArgAction::Append)
            .allow_hyphen_values(true)
            .help_heading("Configuration overrides");
        let dashed = key.replace('_', "-");
        if dashed != key {
            arg = arg.alias(dashed);
        }
        arg = match key {
            "s_list" => arg.alias("s"),
            "rate_list" => arg.alias("rate"),
            "snr_list" => arg.alias("snr"),
            "threads" => arg.help("Worker threads, 0 = all cores"),
            _ => arg,
        };
        run = run.arg(arg);
    }
    Command::new("specsense")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Collaborative compressive spectrum sensing experiments")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(run)
}

/// Config file entries followed by command-line overrides in the order given.
fn collect_entries(m: &ArgMatches) -> Result<Vec<Entry>, Error> {
    let mut entries = Vec::new();
    if let Some(path) = m.get_one::<String>("config") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{path}: cannot read: {e}")))?;
        entries.extend(config::parse_entries(&text, path)?);
    }
    let mut overrides: Vec<(usize, Entry)> = Vec::new();
    for &key in KEYS {
        if let (Some(values), Some(indices)) = (m.get_many::<String>(key), m.indices_of(key)) {
            for (value, idx) in values.zip(indices) {
                overrides.push((
                    idx,
                    Entry {
                        key: key.to_string(),
                        value: value.clone(),
                        origin: format!("--{key}"),
                    },
                ));
            }
        }
    }
    overrides.sort_by_key(|(idx, _)| *idx);
    entries.extend(overrides.into_iter().map(|(_, e)| e));
    Ok(entries)
}

fn write_outputs(
    dir: &Path,
    cfg: &specsense::harness::ExperimentConfig,
    res: &ExperimentResult,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), results_csv(&res.records))?;
    std::fs::write(dir.join("summary.csv"), summary_csv(&res.summaries))?;
    std::fs::write(
        dir.join("manifest.txt"),
        config::manifest(cfg, env!("CARGO_PKG_VERSION")),
    )?;
    Ok(())
}

fn run(m: &ArgMatches) -> Result<u8, (u8, String)> {
    let config_err = |e: Error| (EXIT_CONFIG, e.to_string());
    let entries = collect_entries(m).map_err(config_err)?;
    let cfg = config::resolve(&entries).map_err(config_err)?;
    if m.get_flag("dump-defaults") {
        print!("{}", config::dump(&cfg));
        return Ok(0);
    }
    let res = run_experiment(&cfg).map_err(|e| match e {
        Error::InvalidConfig(_) | Error::InvalidInput(_) => config_err(e),
        other => (EXIT_DECODE, other.to_string()),
    })?;
    let out = PathBuf::from(m.get_one::<String>("out").expect("has default"));
    write_outputs(&out, &cfg, &res).map_err(|e| {
        (
            EXIT_CONFIG,
            format!("{}: cannot write results: {e}", out.display()),
        )
    })?;

    for s in &res.summaries {
        let snr = s
            .cell
            .snr_db
            .map_or("noiseless".to_string(), |v| format!("{v} dB"));
        eprintln!(
            "{:<11} rate {:<5} p {:<3} s {:<3} {:<9}  POD {:.4} ± {:.4}  FAR {:.4}  MDR {:.4}",
            s.decoder.name(),
            s.cell.rate,
            s.cell.p,
            s.cell.s,
            snr,
            s.pod.mean,
            s.pod.std_err,
            s.far.mean,
            s.mdr.mean
        );
    }
    let failures: Vec<_> = res.records.iter().filter(|r| r.decode_failed()).collect();
    if !failures.is_empty() {
        for r in failures.iter().take(5) {
            eprintln!(
                "decode failure: exp {} trial {} ({}): {}",
                r.exp_id,
                r.trial,
                r.decoder.name(),
                r.error.as_deref().unwrap_or("")
            );
        }
        eprintln!("{} trial(s) failed to decode", failures.len());
        if !m.get_flag("keep-going") {
            return Ok(EXIT_DECODE);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let Some(("run", sub)) = matches.subcommand() else {
        unreachable!("subcommand is required");
    };
    match run(sub) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
