use std::path::Path;
use std::process::{Command, Output};

use kbr_cli::csvio::{read_csv, schema, Value};

fn kbr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbr")).args(args).current_dir(cwd).env_remove("KBR_OUT_DIR").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn converge_writes_monotone_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = kbr(
        &["converge", "--fn", "camel1d", "--scheme", "explicit", "--seed", "7", "--ns", "100,200,400", "--seeds", "2", "--out", "o"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("o");
    let rows = read_csv(&out.join("converge_camel1d_explicit.csv"), schema::CONVERGE).unwrap();
    let ns: Vec<f64> = rows.iter().map(|r| r[0].as_f64().unwrap()).collect();
    assert_eq!(ns, [100.0, 200.0, 400.0]);
    assert!(rows.iter().all(|r| r[1].as_str() == Some("explicit") && r[2].as_f64().unwrap() > 0.0));
    for f in ["converge_camel1d_explicit.svg", "summary.json", "resolved_config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["result"]["slopes"]["explicit"]["grad_median_seed"].as_f64().unwrap() < 0.0);
}

#[test]
fn sod_emits_metrics_per_region() {
    let dir = tempfile::tempdir().unwrap();
    let o = kbr(&["pde", "sod", "--scheme", "kbr-roe", "--n", "251", "--t-end", "0.15", "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("o");
    let m = read_csv(&out.join("sod_metrics.csv"), schema::SOD_METRICS).unwrap();
    assert_eq!(m.len(), 2);
    assert_eq!(m[0][1].as_str(), Some("1"));
    assert_eq!(m[1][1].as_str(), Some("2"));
    for r in &m {
        for c in [2, 3, 5, 6] {
            assert!(r[c].as_f64().unwrap() >= 0.0);
        }
        assert!(matches!(r[4], Value::Missing) || r[4].as_f64().unwrap() >= 0.0);
    }
    let snaps = read_csv(&out.join("sod_kbr-roe_snapshots.csv"), schema::EULER_SNAPSHOT).unwrap();
    assert_eq!(snaps.len() % 251, 0);
    let grid = read_csv(&out.join("sod_grid.csv"), schema::GRID).unwrap();
    assert_eq!(grid.len(), 251);
    assert_eq!(grid[250][2], Value::Missing);

    // Scoring the written snapshot reproduces the metrics.
    let o = kbr(&["metrics", "--snapshot", "o/sod_kbr-roe_snapshots.csv", "--label", "kbr-roe", "--out", "m"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let again = std::fs::read(dir.path().join("m/sod_metrics.csv")).unwrap();
    assert_eq!(again, std::fs::read(out.join("sod_metrics.csv")).unwrap());
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[solver]\nnodez = 3\n").unwrap();
    let o = kbr(&["pde", "sod", "--config", "c.toml", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert_eq!(e.lines().count(), 1, "{e}");
    assert!(e.starts_with("error[ConfigError]") && e.contains("nodez"), "{e}");
}

#[test]
fn bad_flag_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = kbr(&["pde", "burgers", "--cfl", "3", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cfl"));
}

#[test]
fn numerical_failure_exits_3_with_error_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = kbr(&["fit", "--fn", "sin", "--n", "1", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let e = stderr(&o);
    assert_eq!(e.lines().count(), 1, "{e}");
    assert!(e.starts_with("error[") && !e.starts_with("error[ConfigError]"), "{e}");
}

#[test]
fn resolved_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = kbr(&["pde", "burgers", "--scheme", "kbr-maccormack", "--n", "81", "--seed", "3", "--out", "a"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = kbr(&["rerun", "a/resolved_config.toml", "--out", "b"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["burgers_kbr-maccormack_snapshots.csv", "burgers_kbr-maccormack_retrain.csv", "burgers_grid.csv", "summary.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_kbr"))
        .args(["pde", "burgers", "--scheme", "maccormack", "--n", "41"])
        .current_dir(dir.path())
        .env("KBR_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from-env/burgers_maccormack_snapshots.csv").exists());
    assert!(!dir.path().join("kbr-out").exists());
}
