use std::path::Path;
use std::process::{Command, Output};

fn pper(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pper"))
        .args(args)
        .current_dir(dir)
        .env_remove("PPER_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = pper(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn single_error_line(out: &Output, kind: &str) {
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error kind={kind}: ")), "{err}");
}

const SMALL: &str = r#"
seed = 5

[gen]
n1 = 30
n2 = 60
overlap = 12

[pipeline]
chunk_size = 16

[bench]
n1 = 12
n2 = 20
overlap = 4
variants = ["cleartext", "optimized"]
eeq_modes = ["interactive"]
chunk_sizes = [5, 10]
base_chunk_size = 10
"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pper.toml"), SMALL).unwrap();
    ok(dir.path(), &["--config", "pper.toml", "gen"]);
    ok(dir.path(), &["--config", "pper.toml", "prep"]);
    dir
}

#[test]
fn gen_prep_run_eval() {
    let dir = setup();
    let d = dir.path();
    for f in ["data/raw/d1_raw.csv", "data/raw/d2_raw.csv", "data/raw/truth.csv", "data/d1.csv", "data/d2.csv", "data/truth.csv"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    ok(d, &["--config", "pper.toml", "run", "--out", "enc"]);
    ok(d, &["--config", "pper.toml", "run", "--variant", "cleartext", "--out", "clear"]);
    let enc = std::fs::read_to_string(d.join("enc/matches.csv")).unwrap();
    assert_eq!(enc, std::fs::read_to_string(d.join("clear/matches.csv")).unwrap());
    assert!(enc.lines().count() > 1);

    ok(d, &["--config", "pper.toml", "run", "--out", "enc2"]);
    assert_eq!(enc, std::fs::read_to_string(d.join("enc2/matches.csv")).unwrap());

    ok(d, &["--config", "pper.toml", "eval", "--matches", "enc/matches.csv", "--out", "enc"]);
    let roc = std::fs::read_to_string(d.join("enc/roc.csv")).unwrap();
    assert_eq!(roc.lines().next().unwrap(), "threshold,recall,precision,fpr");
    assert_eq!(roc.lines().count(), 10);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("enc/blocking.json")).unwrap()).unwrap();
    assert!(report["blocking"]["rr"].as_f64().unwrap() > 0.9);
}

#[test]
fn flags_override_file_and_are_echoed() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--config", "pper.toml", "run", "--chunk-size", "8", "--seed", "9", "--out", "o"]);
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("o/stats.json")).unwrap()).unwrap();
    assert_eq!(stats["config"]["pipeline"]["chunk_size"], 8);
    assert_eq!(stats["config"]["seed"], 9);
    assert_eq!(stats["stats"]["chunk_size"], 8);
    assert!(stats["edges"].as_array().is_some_and(|e| !e.is_empty()));
}

#[test]
fn config_path_from_environment() {
    let dir = setup();
    let out = Command::new(env!("CARGO_BIN_EXE_pper"))
        .args(["run", "--out", "env"])
        .current_dir(dir.path())
        .env("PPER_CONFIG", "pper.toml")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stats = std::fs::read_to_string(dir.path().join("env/stats.json")).unwrap();
    assert!(stats.contains("\"chunk_size\": 16"));
}

#[test]
fn shallow_non_interactive_fails_before_work() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(d.join("shallow.toml"), "[he]\nmultiplicative_depth = 2\n").unwrap();
    let out = pper(d, &["--config", "shallow.toml", "run", "--eeq-mode", "non_interactive", "--out", "ni"]);
    single_error_line(&out, "config");
    assert!(!d.join("ni").exists());
}

#[test]
fn errors_are_single_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    single_error_line(&pper(d, &["run", "--d1", "missing.csv", "--d2", "missing.csv"]), "io");
    single_error_line(&pper(d, &["run", "--variant", "fastest"]), "usage");
    single_error_line(&pper(d, &["run", "--chunk-size", "500"]), "config");
    std::fs::write(d.join("typo.toml"), "[pipeline]\nchunksize = 3\n").unwrap();
    single_error_line(&pper(d, &["--config", "typo.toml", "run"]), "config");
    single_error_line(&pper(d, &["--config", "absent.toml", "run"]), "config");
}

#[test]
fn eval_on_perfect_matches() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("truth.csv"), "id1,id2\n0,3\n1,4\n2,5\n").unwrap();
    std::fs::write(d.join("m.csv"), "id1,id2,score\n0,3,100.000000\n1,4,100.000000\n2,5,100.000000\n").unwrap();
    ok(d, &["eval", "--matches", "m.csv", "--truth", "truth.csv", "--n1", "3", "--n2", "6", "--out", "."]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("blocking.json")).unwrap()).unwrap();
    assert_eq!(report["blocking"]["pc"], 1.0);
    let roc = std::fs::read_to_string(d.join("roc.csv")).unwrap();
    for line in roc.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], "1.000000");
        assert_eq!(f[3].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn bench_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("pper.toml"), SMALL).unwrap();
    ok(d, &["--config", "pper.toml", "bench", "--out", "b"]);
    let csv = std::fs::read_to_string(d.join("b/bench.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("n1,n2,variant,eeq_mode,chunk_size,parallel"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().any(|r| r.contains(",cleartext,")));
    assert!(rows.iter().any(|r| r.contains(",optimized,interactive,5,")));
    assert!(rows.iter().any(|r| r.contains(",optimized,interactive,10,false,")));
}

#[test]
fn unsafe_debug_fields_append_identifiers() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--config", "pper.toml", "run", "--unsafe-debug-fields", "--out", "dbg"]);
    let m = std::fs::read_to_string(d.join("dbg/matches.csv")).unwrap();
    assert!(m.starts_with("id1,id2,score,first_name_1"));
    ok(d, &["--config", "pper.toml", "run", "--out", "plain"]);
    let p = std::fs::read_to_string(d.join("plain/matches.csv")).unwrap();
    assert!(p.starts_with("id1,id2,score\n"));
}
