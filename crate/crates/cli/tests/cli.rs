use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_qtag");

const BASE: &str = r#"
schema = 1
[geometry]
stations = [[0.0], [10.0]]
tag = [5.0]
[protocol]
rounds = 3
first_arrival = 100.0
[keys]
initial_key = "0123456789abcdef"
[adversary]
strategy = "guess_spoofer"
[experiment]
trials = 200
seed = 4
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn qtag(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("QTAG_SEED")
        .env_remove("QTAG_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_prints_table_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", BASE);
    let table = qtag(&["run", &cfg]);
    assert_eq!(table.status.code(), Some(0));
    assert_eq!(stdout(&table).lines().count(), 2);
    let rec = qtag(&["run", &cfg, "--format", "records"]);
    let rows = qtag_core::experiment::parse_records(&stdout(&rec)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].trials, 200);
    assert_eq!(rows[0].exact, Some(0.125));
}

#[test]
fn records_are_reproducible_and_seed_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", BASE);
    let a = stdout(&qtag(&["run", &cfg, "--format", "records"]));
    let b = stdout(&qtag(&["run", &cfg, "--format", "records", "--workers", "3"]));
    assert_eq!(a, b);
    let c = Command::new(BIN)
        .args(["run", &cfg, "--format", "records"])
        .env("QTAG_SEED", "99")
        .output()
        .unwrap();
    assert_ne!(a, stdout(&c));
    let d = stdout(&qtag(&["run", &cfg, "--format", "records", "--seed", "99"]));
    assert_eq!(stdout(&c), d);
}

#[test]
fn empty_sweep_prints_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "a.toml",
        &format!("{BASE}[experiment.sweep]\nrounds = []\n"),
    );
    let out = qtag(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 1);
    let rec = qtag(&["run", &cfg, "--format", "records"]);
    assert_eq!(stdout(&rec), "");
}

#[test]
fn invalid_config_exits_two_without_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        &BASE.replace("[[0.0], [10.0]]", "[[10.0], [0.0]]"),
    );
    let out = qtag(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometry"));
    assert_eq!(qtag(&["validate", &cfg]).status.code(), Some(2));
    let zero = qtag(&["run", &write(dir.path(), "ok.toml", BASE), "--trials", "0"]);
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn parse_error_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &BASE.replace("rounds = 3", "rounds = ="));
    let out = qtag(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 7"));
}

#[test]
fn causality_abort_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ftl.toml", &BASE.replace("guess_spoofer", "ftl_probe"));
    let out = qtag(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("causality"));
}

#[test]
fn trace_replays_and_tampering_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", &BASE.replace("guess_spoofer", "passive"));
    let trace = dir.path().join("t.ndjson");
    let trace_s = trace.display().to_string();
    assert_eq!(qtag(&["run", &cfg, "--trace", &trace_s]).status.code(), Some(0));
    let ok = qtag(&["replay", &trace_s]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("replay: identical"));
    let text = std::fs::read_to_string(&trace).unwrap();
    let tampered = text.replacen(
        "\"kind\":\"emit\",\"message\":{\"type\":\"response\",\"round\":0,\"bit\":true",
        "\"kind\":\"emit\",\"message\":{\"type\":\"response\",\"round\":0,\"bit\":false",
        1,
    );
    let tampered = if tampered == text {
        text.replacen(
            "\"kind\":\"emit\",\"message\":{\"type\":\"response\",\"round\":0,\"bit\":false",
            "\"kind\":\"emit\",\"message\":{\"type\":\"response\",\"round\":0,\"bit\":true",
            1,
        )
    } else {
        tampered
    };
    assert_ne!(tampered, text);
    std::fs::write(&trace, tampered).unwrap();
    let bad = qtag(&["replay", &trace_s]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("diverged at record"));
}

#[test]
fn validate_counts_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "a.toml",
        &format!("{BASE}[experiment.sweep]\nrounds = [1, 2]\ntiming_tolerance = [0.0, 0.5]\n"),
    );
    let out = qtag(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("4 configuration"));
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(root).unwrap() {
        let p = entry.unwrap().path();
        let out = qtag(&["validate", &p.display().to_string()]);
        assert_eq!(out.status.code(), Some(0), "{}", p.display());
    }
}
