use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn scancusum(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scancusum"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn scancusum")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&ok(out)).expect("json output")
}

fn generate(dir: &Path) {
    ok(&scancusum(
        dir,
        &["generate", "--data", "d.csv", "--n-seq", "4", "--t-len", "400", "--q", "0.01", "--seed", "9", "-q"],
    ));
}

#[test]
fn generate_detect_evaluate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate(d);
    let first = std::fs::read(d.join("d.csv")).unwrap();
    let truth = std::fs::read(d.join("d.csv.truth.json")).unwrap();
    generate(d);
    assert_eq!(first, std::fs::read(d.join("d.csv")).unwrap());
    assert_eq!(truth, std::fs::read(d.join("d.csv.truth.json")).unwrap());

    ok(&scancusum(d, &["detect", "--input", "d.csv", "-o", "det.json", "-q"]));
    let det: Value = serde_json::from_slice(&std::fs::read(d.join("det.json")).unwrap()).unwrap();
    assert_eq!(det["tool"], "scancusum");
    assert_eq!(det["command"], "detect");
    assert_eq!(det["config"]["c_scan"], 5.05);
    assert_eq!(det["result"]["sequences"].as_array().unwrap().len(), 4);

    let eval = |format: &str| ok(&scancusum(d, &["evaluate", "--truth", "d.csv.truth.json", "--detections", "det.json", "--format", format]));
    assert_eq!(eval("json"), eval("json"));
    let record: Value = serde_json::from_str(&eval("json")).unwrap();
    let alpha = record["result"]["summary"]["alpha"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&alpha));
    assert!(eval("table").starts_with("# scancusum"));
}

#[test]
fn malformed_csv_reports_position_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "t,seq_0\n1,0.5\n2,abc\n3,0.1\n").unwrap();
    let out = scancusum(dir.path(), &["detect", "--input", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("column 2"), "{err}");
}

#[test]
fn missing_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = scancusum(dir.path(), &["detect", "--input", "nope.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn domain_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = scancusum(dir.path(), &["bounds", "nu", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = scancusum(dir.path(), &["calibrate", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "seed = 3\n[table1]\nreps = \"many\"\n").unwrap();
    let out = scancusum(dir.path(), &["--config", "run.toml", "table1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn bounds_nu_at_ten() {
    let dir = tempfile::tempdir().unwrap();
    let rec = json(&scancusum(dir.path(), &["bounds", "nu", "10"]));
    let nu = rec["result"][0]["value"].as_f64().unwrap();
    assert!((nu - 0.02).abs() < 1e-4, "{nu}");
}

/// `value±se` cells of the Table 1 text body, row by row.
fn table1_cells(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("delta"))
        .map(|l| {
            l.split_whitespace()
                .take(3)
                .flat_map(|c| c.split('±').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
                .collect()
        })
        .collect()
}

#[test]
fn table1_smoke_formats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["table1", "--reps", "100", "-q"];
    let start = Instant::now();
    let rec = json(&scancusum(dir.path(), &args));
    assert!(start.elapsed().as_secs_f64() < 5.0, "took {:?}", start.elapsed());
    let text = ok(&scancusum(dir.path(), &[&args[..], &["--format", "table"]].concat()));
    let rows = rec["result"].as_array().unwrap();
    let cells = table1_cells(&text);
    assert_eq!(rows.len(), 4);
    assert_eq!(cells.len(), 4);
    for (row, cell) in rows.iter().zip(&cells) {
        let want: Vec<f64> = ["delta", "lower", "lower_se", "scan", "scan_se"]
            .iter()
            .map(|k| row[k].as_f64().unwrap())
            .collect();
        assert_eq!(&want, cell);
    }
}

#[test]
fn table2_standard_errors_need_two_replicates() {
    let dir = tempfile::tempdir().unwrap();
    let run = |reps: &str| {
        json(&scancusum(
            dir.path(),
            &["table2", "--n-seq", "5", "--t-len", "300", "--q", "0.01", "--kinds", "constant", "--reps", reps, "-q"],
        ))
    };
    let one = run("1");
    let two = run("2");
    assert!(one["result"][0]["no_share"]["se_beta"].is_null());
    assert!(two["result"][0]["no_share"]["se_beta"].as_f64().is_some());
    let csv = ok(&scancusum(
        dir.path(),
        &["table2", "--n-seq", "5", "--t-len", "300", "--q", "0.01", "--kinds", "constant", "--reps", "1", "--format", "csv", "-q"],
    ));
    assert!(csv.lines().any(|l| l.starts_with("constant")), "{csv}");
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate(d);
    let run = |threads: &str| {
        let mut rec = json(&scancusum(
            d,
            &["pipeline", "--input", "d.csv", "--truth", "d.csv.truth.json", "--c-scan", "4", "--threads", threads, "-q"],
        ));
        rec.as_object_mut().unwrap().remove("threads");
        rec
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "seed = 5\n[calibrate]\nt_len = 300\nreps = 100\nalpha = 0.2\n").unwrap();
    let rec = json(&scancusum(dir.path(), &["--config", "run.toml", "calibrate", "--alpha", "0.1", "-q"]));
    assert_eq!(rec["seed"], 5);
    assert_eq!(rec["config"]["t_len"], 300);
    assert_eq!(rec["config"]["alpha"], 0.1);
    assert_eq!(rec["result"]["reps"], 100);
}
