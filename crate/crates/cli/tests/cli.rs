use std::path::Path;
use std::process::{Command, Output};

fn tsparse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsparse")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = r#"{"transform":{"kind":"haar","n1":32},"signal":{"type":"random_sparse"},
    "sparsity":[2],"measurements":[16],"trials":2,"density":{"mode":"variable"},"seed":3,
    "admm":{"iterations":300}}"#;

#[test]
fn grid_writes_csv_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut csvs = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "2")] {
        let out = dir.path().join(run);
        let o = tsparse(&["grid", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("grid.svg").exists() && out.join("grid.json").exists());
        csvs.push(std::fs::read(out.join("grid.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert!(csvs[0].starts_with(b"s,m,trials,successes,rate,mean_rsnr_db\n"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let read = |seed: &str| {
        let out = dir.path().join(seed);
        let o = tsparse(&["sample", "--config", &cfg, "--seed", seed, "--s", "2", "--out-dir", out.to_str().unwrap()]);
        assert!(o.status.success());
        std::fs::read_to_string(out.join("pattern.json")).unwrap()
    };
    let (a, b) = (read("1"), read("2"));
    assert!(a.contains("\"seed\"") && a != b);
}

#[test]
fn solve_density_and_certify_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"transform":{"kind":"identity","n1":64},"signal":{"type":"random_sparse"},
            "sparsity":[3],"measurements":[40],"trials":1,"density":{"mode":"uniform"}}"#,
    );
    let out = dir.path().to_str().unwrap();
    let o = tsparse(&["solve", "--config", &cfg, "--out-dir", out, "--s", "3"]);
    assert!(o.status.success());
    let x_hat = tsparse::solver::read_x_hat(&dir.path().join("x_hat.bin")).unwrap();
    assert_eq!(x_hat.len(), 64);
    assert!(String::from_utf8_lossy(&o.stdout).contains("rsnr"));

    assert!(tsparse(&["density", "--config", &cfg, "--out-dir", out]).status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("density.json")).unwrap()).unwrap();
    assert_eq!(doc["density"].as_array().unwrap().len(), 64);

    let o = tsparse(&["certify", "--config", &cfg, "--out-dir", out, "--s", "3", "--reuse", "30"]);
    assert!(o.status.success());
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert!(cert["passed"].is_boolean() && cert["stages"].is_array());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), r#"{"transform":{"kind":"haar","n1":32},"trials":0}"#);
    assert_eq!(tsparse(&["grid", "--config", &bad]).status.code(), Some(2));
    let missing = dir.path().join("none.json");
    assert_eq!(tsparse(&["grid", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(tsparse(&["grid"]).status.code(), Some(2));
}

#[test]
fn cell_failure_exits_3() {
    // the single forced sample leaves nothing to draw at m = 1
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"transform":{"kind":"tv1d","n1":32},"signal":{"type":"mri_line"},
            "measurements":[1],"trials":1,"density":{"mode":"two_step_uniform"}}"#,
    );
    let o = tsparse(&["grid", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(dir.path().join("grid.csv").exists());
}
