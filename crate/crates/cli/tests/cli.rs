use std::path::Path;
use std::process::{Command, Output};

fn specsense(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specsense"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

const SMALL: &[&str] = &[
    "run", "--n", "8", "--m", "3", "--s", "1", "--trials", "1", "--seed", "7",
];

#[test]
fn same_seed_gives_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let mut args = SMALL.to_vec();
        args.extend(["--out", name]);
        let out = specsense(&args, dir.path());
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push(std::fs::read(dir.path().join(name).join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn results_have_the_header_and_unix_line_endings() {
    let dir = tempfile::tempdir().unwrap();
    let out = specsense(SMALL, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(!csv.contains('\r'));
    assert!(csv.ends_with('\n'));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(specsense::harness::CSV_HEADER));
    let width = specsense::harness::CSV_HEADER.split(',').count();
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    for row in rows {
        assert_eq!(row.split(',').count(), width, "{row}");
    }
    assert!(dir.path().join("manifest.txt").exists());
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn too_many_occupied_channels_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = specsense(
        &["run", "--n", "5", "--m", "3", "--s", "6", "--trials", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains('6') && err.contains('5'), "{err}");
    assert!(!dir.path().join("results.csv").exists());
}

#[test]
fn dumped_defaults_load_back_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let first = specsense(
        &["run", "--dump-defaults", "--n", "40", "--rate", "0.3,0.4"],
        dir.path(),
    );
    assert!(first.status.success());
    let path = dir.path().join("dumped.conf");
    std::fs::write(&path, &first.stdout).unwrap();
    let second = specsense(
        &["run", path.to_str().unwrap(), "--dump-defaults"],
        dir.path(),
    );
    assert!(
        second.status.success(),
        "{}",
        String::from_utf8_lossy(&second.stderr)
    );
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.lines().any(|l| l.replace(' ', "") == "n=40"), "{text}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    std::fs::write(&path, "n = 10\nbogus_key = 3\n").unwrap();
    let out = specsense(&["run", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}
